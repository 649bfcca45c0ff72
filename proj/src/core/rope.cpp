// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fgpaint/rope.hpp"

#include <cmath>

#include "fgpaint/errors.hpp"
#include "fgpaint/tape.hpp"

namespace fgp {

GridCoords::GridCoords(int rows, int cols, std::vector<GridCoord> cells)
    : rows_(rows), cols_(cols), cells_(std::move(cells)) {
  if (rows < 0 || cols < 0) throw DimensionError("GridCoords: negative grid size");
  for (const auto& c : cells_) {
    if (c.row < 0 || c.row >= rows || c.col < 0 || c.col >= cols) {
      throw DimensionError("GridCoords: (" + std::to_string(c.row) + ", " + std::to_string(c.col) +
                           ") outside " + std::to_string(rows) + "x" + std::to_string(cols) + " grid");
    }
  }
}

GridCoords GridCoords::raster(int rows, int cols) {
  std::vector<GridCoord> cells;
  cells.reserve(static_cast<std::size_t>(rows * cols));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) cells.push_back({r, c});
  return GridCoords(rows, cols, std::move(cells));
}

GridCoords GridCoords::origin(int rows, int cols, std::size_t count) {
  return GridCoords(std::max(rows, 1), std::max(cols, 1), std::vector<GridCoord>(count, GridCoord{0, 0}));
}

std::vector<GridCoord> negate(std::span<const GridCoord> coords) {
  std::vector<GridCoord> out;
  out.reserve(coords.size());
  for (const auto& c : coords) out.push_back({-c.row, -c.col});
  return out;
}

std::vector<GridCoord> concat(std::span<const GridCoord> a, std::span<const GridCoord> b) {
  std::vector<GridCoord> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

namespace {

struct RopeTable {
  // cos/sin per (token, pair-within-head).
  std::vector<float> cos, sin;
  std::int64_t pairs;
};

RopeTable build_table(std::span<const GridCoord> coords, std::int64_t dh, double base) {
  const std::int64_t half = dh / 2;
  const std::int64_t axis_pairs = half / 2;
  RopeTable t;
  t.pairs = dh / 2;
  t.cos.resize(coords.size() * static_cast<std::size_t>(t.pairs));
  t.sin.resize(t.cos.size());
  for (std::size_t n = 0; n < coords.size(); ++n) {
    for (std::int64_t p = 0; p < t.pairs; ++p) {
      const bool col_axis = p >= axis_pairs;
      const std::int64_t i = col_axis ? p - axis_pairs : p;
      const double freq = std::pow(base, -2.0 * double(i) / double(half));
      const double pos = col_axis ? coords[n].col : coords[n].row;
      const double angle = pos * freq;
      t.cos[n * static_cast<std::size_t>(t.pairs) + static_cast<std::size_t>(p)] = static_cast<float>(std::cos(angle));
      t.sin[n * static_cast<std::size_t>(t.pairs) + static_cast<std::size_t>(p)] = static_cast<float>(std::sin(angle));
    }
  }
  return t;
}

// Rotates every pair of `src` into `dst`; sign = -1 applies the inverse.
void rotate(const float* src, float* dst, bool accumulate, const RopeTable& t, std::int64_t batch,
            std::int64_t tokens, std::int64_t heads, std::int64_t dh, float sign) {
  const std::int64_t width = heads * dh;
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t n = 0; n < tokens; ++n) {
      const float* cs = t.cos.data() + n * t.pairs;
      const float* sn = t.sin.data() + n * t.pairs;
      for (std::int64_t h = 0; h < heads; ++h) {
        const std::int64_t base_idx = (b * tokens + n) * width + h * dh;
        for (std::int64_t p = 0; p < t.pairs; ++p) {
          const float x0 = src[base_idx + 2 * p];
          const float x1 = src[base_idx + 2 * p + 1];
          const float s = sign * sn[p];
          const float y0 = x0 * cs[p] - x1 * s;
          const float y1 = x0 * s + x1 * cs[p];
          if (accumulate) {
            dst[base_idx + 2 * p] += y0;
            dst[base_idx + 2 * p + 1] += y1;
          } else {
            dst[base_idx + 2 * p] = y0;
            dst[base_idx + 2 * p + 1] = y1;
          }
        }
      }
    }
}

}  // namespace

Tensor rope_2d_apply(const Tensor& tokens, std::span<const GridCoord> coords, double base, int heads) {
  if (tokens.rank() != 2 && tokens.rank() != 3) {
    throw DimensionError("rope_2d_apply: expects [N, D] or [B, N, D], got " + shape_to_string(tokens.shape()));
  }
  const std::int64_t batch = tokens.rank() == 3 ? tokens.dim(0) : 1;
  const std::int64_t n = tokens.dim(-2);
  const std::int64_t d = tokens.dim(-1);
  if (heads <= 0 || d % heads != 0) throw DimensionError("rope_2d_apply: width not divisible by heads");
  const std::int64_t dh = d / heads;
  if (dh % 4 != 0) {
    throw DimensionError("rope_2d_apply: head width " + std::to_string(dh) + " is not divisible by 4");
  }
  if (static_cast<std::int64_t>(coords.size()) != n) {
    throw DimensionError("rope_2d_apply: " + std::to_string(coords.size()) + " coordinates for " +
                         std::to_string(n) + " tokens");
  }
  auto table = std::make_shared<RopeTable>(build_table(coords, dh, base));
  Tensor out = Tensor::zeros(tokens.shape());
  rotate(tokens.data().data(), out.mutable_data().data(), false, *table, batch, n, heads, dh, 1.0f);
  if (should_record(tokens)) {
    out.impl()->requires_grad = true;
    auto o = out.impl();
    auto px = tokens.impl();
    Tape::active()->record([o, px, table, batch, n, heads, dh] {
      if (o->grad.size() != o->data.size() || !px->requires_grad) return;
      rotate(o->grad.data(), px->grad_buffer().data(), true, *table, batch, n, heads, dh, -1.0f);
    });
  }
  return out;
}

}  // namespace fgp
