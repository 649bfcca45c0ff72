// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fgpaint/gradcheck.hpp"

#include <cmath>
#include <random>

#include "fgpaint/errors.hpp"
#include "fgpaint/tape.hpp"

namespace fgp {

namespace {

double eval_scalar(const std::function<Tensor()>& f) {
  Tape::Pause pause;
  Tensor y = f();
  if (y.numel() != 1) throw DimensionError("grad_check: function must return a scalar");
  const double v = y.item();
  if (!std::isfinite(v)) throw NumericError("grad_check: function is not finite at the probe point");
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                           const GradCheckOptions& options) {
  std::vector<bool> previous;
  for (auto& p : params) {
    previous.push_back(p.requires_grad());
    p.zero_grad();
    p.set_requires_grad(true);
  }

  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor y = f();
    if (y.numel() != 1) throw DimensionError("grad_check: function must return a scalar");
    if (!std::isfinite(y.item())) throw NumericError("grad_check: function value is not finite");
    // A loss that ignores every parameter has zero analytic gradient.
    if (y.requires_grad()) tape.backward(y);
  }

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  std::size_t total = 0;
  for (const auto& p : params) total += static_cast<std::size_t>(p.numel());
  auto locate = [&](std::size_t flat) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto n = static_cast<std::size_t>(params[i].numel());
      if (flat < n) return std::make_pair(i, flat);
      flat -= n;
    }
    return std::make_pair(params.size(), std::size_t{0});
  };
  if (options.samples == 0 || options.samples >= total) {
    for (std::size_t i = 0; i < total; ++i) coords.push_back(locate(i));
  } else {
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    for (std::size_t i = 0; i < options.samples; ++i) coords.push_back(locate(pick(rng)));
  }

  GradCheckResult result;
  for (const auto& [pi, idx] : coords) {
    Tensor& p = params[pi];
    const double analytic = p.has_grad() ? p.grad()[idx] : 0.0;
    float& slot = p.mutable_data()[idx];
    const float orig = slot;
    slot = orig + options.eps;
    const double up = eval_scalar(f);
    slot = orig - options.eps;
    const double down = eval_scalar(f);
    slot = orig;
    // Use the perturbation actually representable in float32.
    const double h = (double(orig + options.eps) - double(orig - options.eps));
    const double numeric = (up - down) / h;
    const double err = std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-8);
    result.max_rel_error = std::max(result.max_rel_error, err);
    ++result.checked;
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].zero_grad();
    params[i].set_requires_grad(previous[i]);
  }
  return result;
}

}  // namespace fgp
