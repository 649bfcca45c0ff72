// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fgpaint/tensor.hpp"

namespace fgp {

struct GradCheckOptions {
  float eps = 1e-3f;
  // Coordinates sampled uniformly over all parameter elements; 0 = all.
  std::size_t samples = 64;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of a scalar function against central
/// finite differences. `f` must rebuild its graph from `params` on every
/// call. The error per coordinate is |a - n| / (|a| + |n| + 1e-8).
GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                           const GradCheckOptions& options = {});

}  // namespace fgp
