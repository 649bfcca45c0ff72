// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "fgpaint/config.hpp"
#include "fgpaint/data.hpp"
#include "fgpaint/model.hpp"

namespace fgp {

/// Linear beta schedule over steps 1..T. Index 0 is the clean endpoint
/// (alpha_bar(0) == 1).
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  // betas run linearly from beta_start/T to beta_end/T.
  NoiseSchedule(int steps, double beta_start, double beta_end);
  static NoiseSchedule from_config(const TrainConfig& cfg);

  int steps() const { return int(betas_.size()); }
  double beta(int t) const;
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const;
  // Variance of q(x_{t-1} | x_t, x_0).
  double posterior_variance(int t) const;

 private:
  void check(int t, bool allow_zero) const;
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;  // alpha_bars_[t], t = 0..T
};

// x_t = sqrt(ab_t)·x0 + sqrt(1 - ab_t)·eps, one t per batch row (t may be 0).
Tensor q_sample(const NoiseSchedule& s, const Tensor& x0, const std::vector<int>& t, const Tensor& eps);
// Inverts q_sample given the noise.
Tensor predict_x0(const NoiseSchedule& s, const Tensor& x_t, const std::vector<int>& t, const Tensor& eps);
// Mean of q(x_{t-1} | x_t, x_0).
Tensor posterior_mean(const NoiseSchedule& s, const Tensor& x_t, const Tensor& x0, const std::vector<int>& t);

struct NoiseDraw {
  std::vector<int> t;
  Tensor eps;
  Tensor x_t;
};

NoiseDraw draw_noise(const NoiseSchedule& s, const Tensor& x0, Rng& rng);

using NoisePredictor = std::function<Tensor(const NoiseDraw&)>;

// Mean squared error between the predictor's output and the drawn noise.
// Throws NumericError if the loss is not finite.
Tensor training_loss(const NoisePredictor& predict, const Tensor& x0, const NoiseSchedule& s, Rng& rng);

/// One training batch with everything the model consumes.
struct TrainBatch {
  Tensor latents;   // [B, C, h, w] normalized
  Tensor text;      // [B, text_dim]
  SubjectBatch subject;
  Tensor semantic;  // [B, N, token_dim] precomputed, may be undefined
};

Tensor training_loss(const Model& model, const TrainBatch& batch, const NoiseSchedule& s, Rng& rng);

using EpsFunction = std::function<Tensor(const Tensor& x_t, int t)>;

// Ancestral DDPM from N(0, I) noise drawn with `seed`; runs without a tape.
// With x0_clip > 0 each step clamps the implied x0 and takes the posterior
// mean from it. Near alpha_bar(T) ~ 0 the implied x0 amplifies noise
// prediction error by 1/sqrt(alpha_bar), and an imperfect predictor
// otherwise drifts far outside the data range.
Tensor ddpm_sample(const EpsFunction& eps, const Shape& shape, const NoiseSchedule& s, std::uint64_t seed,
                   double x0_clip = 0.0);
Tensor ddpm_sample(const Model& model, const Tensor& text, const SubjectFeature* subject, const NoiseSchedule& s,
                   std::uint64_t seed, ForwardTrace* trace = nullptr, double x0_clip = 0.0);

// final = m·I + (1 - m)·generated. generated and I are [3, H, W] or
// [B, 3, H, W]; m is [H, W] or [B, H, W].
Tensor composite_foreground(const Tensor& generated, const Tensor& subject, const Tensor& mask);

/// Adam with optional first moment (beta1 = 0 gives a momentum-free update),
/// linear warmup and global-norm clipping.
class Adam {
 public:
  struct Options {
    double lr = 1e-4;
    double beta1 = 0.0;
    double beta2 = 0.999;
    double eps = 1e-8;
    int warmup = 0;
    double grad_clip = 0.0;
  };

  Adam(std::vector<Tensor> params, Options options);
  // Applies one update from the current gradients. Returns the pre-clip
  // global gradient norm.
  double step();
  double lr_at(int step) const;
  int steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  Options opt_;
  std::vector<std::vector<float>> m_, v_;
  int t_ = 0;
};

struct TrainingSet {
  std::vector<const Sample*> samples;
  std::vector<Tensor> latents;   // per sample [C, h, w]
  std::vector<Tensor> semantic;  // per sample [N, token_dim]
};

// Precomputes normalized latents and semantic tokens with the frozen
// autoencoder.
TrainingSet prepare_training_set(const Model& model, const std::vector<Sample>& samples);
TrainBatch make_batch(const TrainingSet& set, const std::vector<std::size_t>& indices);

struct VaeReport {
  double first_loss = 0;
  double final_loss = 0;
};

// Reconstruction pretraining, then per-channel latent normalization; leaves
// the autoencoder frozen.
VaeReport pretrain_vae(Model& model, const std::vector<Sample>& samples, const TrainConfig& cfg, std::ostream* log);

struct TrainLog {
  std::vector<double> losses;
  std::vector<double> gate_means;  // mean |gate| after each step
};

double mean_abs_gate(const Model& model);

// Joint training of base, adapters and subject encoder (base optional via
// freeze_base). Writes one `step= loss= gate_mean= wall_time=` line per
// log_every steps.
TrainLog train(Model& model, const std::vector<Sample>& samples, const TrainConfig& cfg, std::ostream* log);

// Copies every parameter of `group` between models with the same config.
void copy_group(const ParamStore& from, ParamStore& to, ParamGroup group);

}  // namespace fgp
