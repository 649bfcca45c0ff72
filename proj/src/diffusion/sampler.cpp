// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "fgpaint/diffusion.hpp"
#include "fgpaint/errors.hpp"
#include "fgpaint/ops.hpp"
#include "fgpaint/tape.hpp"

namespace fgp {

Tensor ddpm_sample(const EpsFunction& eps_fn, const Shape& shape, const NoiseSchedule& s, std::uint64_t seed,
                   double x0_clip) {
  if (!(x0_clip >= 0)) throw ScheduleError("ddpm_sample: x0_clip must be >= 0");
  Tape::Pause pause;
  Rng rng(seed);
  Tensor x = randn(shape, rng);
  for (int t = s.steps(); t >= 1; --t) {
    Tensor eps = eps_fn(x, t);
    if (eps.shape() != x.shape()) throw DimensionError("ddpm_sample: noise prediction shape differs from x_t");
    const double a = 1.0 / std::sqrt(s.alpha(t));
    const double c = s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t));
    const double sigma = t > 1 ? std::sqrt(s.posterior_variance(t)) : 0.0;
    Tensor z = t > 1 ? randn(shape, rng) : Tensor();
    Tensor next = Tensor::zeros(shape);
    auto dx = x.data(), de = eps.data();
    auto dn = next.mutable_data();
    if (x0_clip > 0) {
      // Posterior mean coefficients for q(x_{t-1} | x_t, x0).
      const double ab = s.alpha_bar(t), ab_prev = s.alpha_bar(t - 1);
      const double c0 = std::sqrt(ab_prev) * s.beta(t) / (1.0 - ab);
      const double ct = std::sqrt(s.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
      const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
      for (std::size_t i = 0; i < dn.size(); ++i) {
        const double x0 = std::clamp((double(dx[i]) - sb * de[i]) / sa, -x0_clip, x0_clip);
        double v = c0 * x0 + ct * dx[i];
        if (t > 1) v += sigma * z.data()[i];
        dn[i] = static_cast<float>(v);
      }
    } else {
      for (std::size_t i = 0; i < dn.size(); ++i) {
        double v = a * (double(dx[i]) - c * de[i]);
        if (t > 1) v += sigma * z.data()[i];
        dn[i] = static_cast<float>(v);
      }
    }
    if (!all_finite(dn)) throw NumericError("ddpm_sample: non-finite latent at step " + std::to_string(t));
    x = next;
  }
  return x;
}

Tensor ddpm_sample(const Model& model, const Tensor& text, const SubjectFeature* subject, const NoiseSchedule& s,
                   std::uint64_t seed, ForwardTrace* trace, double x0_clip) {
  const auto& cfg = model.config();
  const std::int64_t b = text.dim(0);
  std::int64_t h = cfg.latent_size(), w = cfg.latent_size();
  if (subject) {
    const int f = cfg.patch_size;
    h = subject->coords.rows() * f;
    w = subject->coords.cols() * f;
  }
  if (trace) trace->subject_maps.clear();
  ForwardTrace step_trace;
  return ddpm_sample(
      [&](const Tensor& x, int t) {
        std::vector<int> ts(static_cast<std::size_t>(b), t);
        Tensor eps = model.predict_noise(x, ts, text, subject, trace ? &step_trace : nullptr);
        if (trace) {
          // Accumulate per-block maps over steps; callers divide by steps().
          if (trace->subject_maps.empty()) {
            trace->subject_maps = step_trace.subject_maps;
            for (auto& m : trace->subject_maps)
              if (m.defined()) m = m.detach();
          } else {
            for (std::size_t i = 0; i < step_trace.subject_maps.size(); ++i) {
              if (!step_trace.subject_maps[i].defined()) continue;
              auto dst = trace->subject_maps[i].mutable_data();
              auto src = step_trace.subject_maps[i].data();
              for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
            }
          }
        }
        return eps;
      },
      {b, cfg.latent_channels, h, w}, s, seed, x0_clip);
}

Tensor composite_foreground(const Tensor& generated, const Tensor& subject, const Tensor& mask) {
  if (generated.shape() != subject.shape()) {
    throw DimensionError("composite_foreground: generated " + shape_to_string(generated.shape()) + " vs subject " +
                         shape_to_string(subject.shape()));
  }
  const auto r = generated.rank();
  const bool batched = r == 4;
  if ((r != 3 && r != 4) || generated.dim(-3) != 3 || mask.rank() != (batched ? 3u : 2u) ||
      mask.dim(-1) != generated.dim(-1) || mask.dim(-2) != generated.dim(-2) ||
      (batched && mask.dim(0) != generated.dim(0))) {
    throw DimensionError("composite_foreground: mask " + shape_to_string(mask.shape()) + " does not match image " +
                         shape_to_string(generated.shape()));
  }
  const auto plane = mask.dim(-1) * mask.dim(-2);
  const auto batch = batched ? generated.dim(0) : 1;
  Tensor out = Tensor::zeros(generated.shape());
  auto g = generated.data(), s = subject.data(), m = mask.data();
  auto d = out.mutable_data();
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t i = 0; i < plane; ++i) {
        const auto k = static_cast<std::size_t>((b * 3 + c) * plane + i);
        const float mk = m[static_cast<std::size_t>(b * plane + i)];
        d[k] = mk * s[k] + (1.0f - mk) * g[k];
      }
  return out;
}

}  // namespace fgp
