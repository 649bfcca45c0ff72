// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "fgpaint/tensor.hpp"

namespace fgp {

struct GridCoord {
  int row = 0;
  int col = 0;
  bool operator==(const GridCoord&) const = default;
};

/// Per-token (row, col) positions on a rows×cols latent patch grid.
class GridCoords {
 public:
  GridCoords() = default;
  // Validates that every coordinate lies inside the grid.
  GridCoords(int rows, int cols, std::vector<GridCoord> cells);

  // Row-major enumeration of the full grid.
  static GridCoords raster(int rows, int cols);
  // `count` tokens all placed at the origin (disables rotation).
  static GridCoords origin(int rows, int cols, std::size_t count);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return cells_.size(); }
  std::span<const GridCoord> cells() const { return cells_; }
  const GridCoord& operator[](std::size_t i) const { return cells_[i]; }
  bool operator==(const GridCoords&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<GridCoord> cells_;
};

std::vector<GridCoord> negate(std::span<const GridCoord> coords);
std::vector<GridCoord> concat(std::span<const GridCoord> a, std::span<const GridCoord> b);

inline constexpr double kDefaultRopeBase = 10000.0;

/// Two-dimensional rotary embedding.
///
/// `tokens` is [N, D] or [B, N, D] with D split into `heads` equal heads of
/// width dh (dh % 4 == 0). Within each head the first dh/2 channels rotate by
/// the token's row and the last dh/2 by its column, in adjacent channel pairs
/// with frequencies base^(-2i/(dh/2)). Coordinates may be negative (inverse).
Tensor rope_2d_apply(const Tensor& tokens, std::span<const GridCoord> coords, double base = kDefaultRopeBase,
                     int heads = 1);

}  // namespace fgp
