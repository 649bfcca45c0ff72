// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "fgpaint/data.hpp"
#include "fgpaint/errors.hpp"

namespace fgp {

Tensor sobel_raw(const Tensor& gray) {
  if (gray.rank() != 2) {
    throw DimensionError("sobel: expects a single-channel [H, W] image, got " + shape_to_string(gray.shape()));
  }
  const int h = int(gray.dim(0)), w = int(gray.dim(1));
  auto at = [&](int y, int x) {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return double(gray[y * w + x]);
  };
  Tensor out = Tensor::zeros({h, w});
  auto o = out.mutable_data();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y, x - 1) + at(y + 1, x - 1));
      const double gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y - 1, x) + at(y - 1, x + 1));
      o[static_cast<std::size_t>(y * w + x)] = static_cast<float>(std::sqrt(gx * gx + gy * gy));
    }
  return out;
}

Tensor sobel(const Tensor& gray) {
  Tensor out = sobel_raw(gray);
  float mx = 0.0f;
  for (float v : out.data()) mx = std::max(mx, v);
  if (mx > 0.0f)
    for (auto& v : out.mutable_data()) v /= mx;
  return out;
}

}  // namespace fgp
