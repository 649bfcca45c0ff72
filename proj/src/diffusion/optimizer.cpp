// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "fgpaint/diffusion.hpp"
#include "fgpaint/errors.hpp"

namespace fgp {

Adam::Adam(std::vector<Tensor> params, Options options) : params_(std::move(params)), opt_(options) {
  if (!(opt_.lr > 0) || opt_.beta1 < 0 || opt_.beta1 >= 1 || opt_.beta2 < 0 || opt_.beta2 >= 1) {
    throw ConfigError("adam: lr must be positive and betas in [0, 1)");
  }
  for (const auto& p : params_) {
    m_.emplace_back(opt_.beta1 > 0 ? static_cast<std::size_t>(p.numel()) : 0, 0.0f);
    v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0f);
  }
}

double Adam::lr_at(int step) const {
  if (opt_.warmup <= 0 || step >= opt_.warmup) return opt_.lr;
  return opt_.lr * double(step + 1) / double(opt_.warmup);
}

double Adam::step() {
  double sq = 0.0;
  for (const auto& p : params_)
    if (p.has_grad())
      for (float g : p.grad()) sq += double(g) * g;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("adam: gradient norm is not finite at step " + std::to_string(t_));
  const double clip = opt_.grad_clip > 0 && norm > opt_.grad_clip ? opt_.grad_clip / norm : 1.0;

  const double lr = lr_at(t_);
  ++t_;
  const double bc1 = opt_.beta1 > 0 ? 1.0 - std::pow(opt_.beta1, t_) : 1.0;
  const double bc2 = 1.0 - std::pow(opt_.beta2, t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = double(g[k]) * clip;
      double mk = gk;
      if (opt_.beta1 > 0) {
        m[k] = static_cast<float>(opt_.beta1 * m[k] + (1.0 - opt_.beta1) * gk);
        mk = m[k];
      }
      v[k] = static_cast<float>(opt_.beta2 * v[k] + (1.0 - opt_.beta2) * gk * gk);
      const double mhat = mk / bc1, vhat = v[k] / bc2;
      w[k] = static_cast<float>(w[k] - lr * mhat / (std::sqrt(vhat) + opt_.eps));
    }
  }
  return norm;
}

}  // namespace fgp
