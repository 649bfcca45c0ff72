// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "fgpaint/diffusion.hpp"
#include "fgpaint/errors.hpp"
#include "fgpaint/ops.hpp"

namespace fgp {

NoiseSchedule::NoiseSchedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ScheduleError("noise schedule needs at least one step");
  const double lo = beta_start / steps, hi = beta_end / steps;
  if (!(lo > 0 && hi < 1 && lo <= hi)) {
    throw ScheduleError("betas must satisfy 0 < beta_start <= beta_end < T, got " + std::to_string(beta_start) +
                        ", " + std::to_string(beta_end) + " for T=" + std::to_string(steps));
  }
  alpha_bars_.push_back(1.0);
  for (int t = 1; t <= steps; ++t) {
    const double b = steps == 1 ? lo : lo + (hi - lo) * double(t - 1) / double(steps - 1);
    betas_.push_back(b);
    alpha_bars_.push_back(alpha_bars_.back() * (1.0 - b));
  }
}

NoiseSchedule NoiseSchedule::from_config(const TrainConfig& cfg) {
  return NoiseSchedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);
}

void NoiseSchedule::check(int t, bool allow_zero) const {
  if (t < (allow_zero ? 0 : 1) || t > steps()) {
    throw ScheduleError("timestep " + std::to_string(t) + " outside [" + (allow_zero ? "0" : "1") + ", " +
                        std::to_string(steps()) + "]");
  }
}

double NoiseSchedule::beta(int t) const {
  check(t, false);
  return betas_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
  check(t, true);
  return alpha_bars_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::posterior_variance(int t) const {
  check(t, false);
  return beta(t) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t));
}

namespace {

void check_batch(const Tensor& x, const std::vector<int>& t, const char* op) {
  if (x.rank() < 1 || x.dim(0) != std::int64_t(t.size())) {
    throw DimensionError(std::string(op) + ": " + std::to_string(t.size()) + " timesteps for batch " +
                         shape_to_string(x.shape()));
  }
}

// out = a_b·x + c_b·y per batch row b.
Tensor per_row_affine(const Tensor& x, const Tensor& y, const std::vector<double>& a, const std::vector<double>& c) {
  Tensor out = Tensor::zeros(x.shape());
  const auto row = x.numel() / std::max<std::int64_t>(x.dim(0), 1);
  auto dx = x.data(), dy = y.data();
  auto d = out.mutable_data();
  for (std::size_t b = 0; b < a.size(); ++b)
    for (std::int64_t i = 0; i < row; ++i) {
      const auto k = b * static_cast<std::size_t>(row) + static_cast<std::size_t>(i);
      d[k] = static_cast<float>(a[b] * dx[k] + c[b] * dy[k]);
    }
  return out;
}

}  // namespace

Tensor q_sample(const NoiseSchedule& s, const Tensor& x0, const std::vector<int>& t, const Tensor& eps) {
  check_batch(x0, t, "q_sample");
  if (eps.shape() != x0.shape()) throw DimensionError("q_sample: noise shape differs from x0");
  std::vector<double> a, c;
  for (int ti : t) {
    a.push_back(std::sqrt(s.alpha_bar(ti)));
    c.push_back(std::sqrt(1.0 - s.alpha_bar(ti)));
  }
  return per_row_affine(x0, eps, a, c);
}

Tensor predict_x0(const NoiseSchedule& s, const Tensor& x_t, const std::vector<int>& t, const Tensor& eps) {
  check_batch(x_t, t, "predict_x0");
  std::vector<double> a, c;
  for (int ti : t) {
    const double ab = s.alpha_bar(ti);
    a.push_back(1.0 / std::sqrt(ab));
    c.push_back(-std::sqrt(1.0 - ab) / std::sqrt(ab));
  }
  return per_row_affine(x_t, eps, a, c);
}

Tensor posterior_mean(const NoiseSchedule& s, const Tensor& x_t, const Tensor& x0, const std::vector<int>& t) {
  check_batch(x_t, t, "posterior_mean");
  std::vector<double> a, c;
  for (int ti : t) {
    const double ab = s.alpha_bar(ti), ab_prev = s.alpha_bar(ti - 1), b = s.beta(ti);
    a.push_back(std::sqrt(s.alpha(ti)) * (1.0 - ab_prev) / (1.0 - ab));
    c.push_back(std::sqrt(ab_prev) * b / (1.0 - ab));
  }
  return per_row_affine(x_t, x0, a, c);
}

NoiseDraw draw_noise(const NoiseSchedule& s, const Tensor& x0, Rng& rng) {
  NoiseDraw d;
  for (std::int64_t b = 0; b < x0.dim(0); ++b) d.t.push_back(int(rng.uniform_int(1, s.steps())));
  d.eps = randn(x0.shape(), rng);
  d.x_t = q_sample(s, x0, d.t, d.eps);
  return d;
}

Tensor training_loss(const NoisePredictor& predict, const Tensor& x0, const NoiseSchedule& s, Rng& rng) {
  NoiseDraw d = draw_noise(s, x0, rng);
  Tensor loss = mse(predict(d), d.eps);
  if (!std::isfinite(loss.item())) {
    std::string ts;
    for (int t : d.t) ts += (ts.empty() ? "" : ",") + std::to_string(t);
    throw NumericError("training loss is not finite (timesteps " + ts + ")");
  }
  return loss;
}

Tensor training_loss(const Model& model, const TrainBatch& batch, const NoiseSchedule& s, Rng& rng) {
  SubjectFeature f = model.encode_subject(batch.subject, batch.semantic);
  return training_loss([&](const NoiseDraw& d) { return model.predict_noise(d.x_t, d.t, batch.text, &f); },
                       batch.latents, s, rng);
}

}  // namespace fgp
