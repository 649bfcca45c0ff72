// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fgpaint/metrics.hpp"

#include <cmath>
#include <vector>

#include "fgpaint/errors.hpp"

namespace fgp {

namespace {

void check_masks(const Tensor& m_s, const Tensor& m_g, const char* op) {
  if (m_s.rank() != 2 || m_s.shape() != m_g.shape()) {
    throw DimensionError(std::string(op) + ": masks " + shape_to_string(m_s.shape()) + " and " +
                         shape_to_string(m_g.shape()) + " must be equal [H, W]");
  }
  for (const auto* t : {&m_s, &m_g})
    for (float v : t->data())
      if (v != 0.0f && v != 1.0f) throw MetricError(std::string(op) + ": masks must be binary");
}

// Σ relu(a - b) and Σ b over binary masks, counted exactly.
std::pair<std::int64_t, std::int64_t> excess_and_mass(const Tensor& a, const Tensor& b) {
  std::int64_t excess = 0, mass = 0;
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    excess += (da[i] == 1.0f && db[i] == 0.0f);
    mass += (db[i] == 1.0f);
  }
  return {excess, mass};
}

}  // namespace

double oer(const Tensor& m_s, const Tensor& m_g) {
  check_masks(m_s, m_g, "oer");
  auto [excess, mass] = excess_and_mass(m_s, m_g);
  if (mass == 0) throw MetricError("oer: ground-truth mask is empty");
  return double(excess) / double(mass);
}

double coverage(const Tensor& m_s, const Tensor& m_g) {
  check_masks(m_s, m_g, "coverage");
  const auto missed = excess_and_mass(m_g, m_s).first;
  const auto gt = excess_and_mass(m_s, m_g).second;
  if (gt == 0) throw MetricError("coverage: ground-truth mask is empty");
  return double(missed) / double(gt);
}

SegmentResult generated_mask(const Tensor& image, float threshold) {
  const Tensor gray = to_gray(image);
  const int h = int(gray.dim(0)), w = int(gray.dim(1));
  auto g = gray.data();
  std::vector<int> label(static_cast<std::size_t>(h * w), -1);
  std::vector<int> stack;
  int best = -1;
  std::size_t best_size = 0;
  int next = 0;
  for (int start = 0; start < h * w; ++start) {
    if (label[start] != -1 || !(g[start] > threshold)) continue;
    std::size_t size = 0;
    stack.assign(1, start);
    label[start] = next;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      ++size;
      const int y = p / w, x = p % w;
      const int nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& n : nb) {
        if (n[0] < 0 || n[0] >= h || n[1] < 0 || n[1] >= w) continue;
        const int q = n[0] * w + n[1];
        if (label[q] == -1 && g[q] > threshold) {
          label[q] = next;
          stack.push_back(q);
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best = next;
    }
    ++next;
  }
  SegmentResult r{Tensor::zeros({h, w}), best < 0};
  auto d = r.mask.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = label[i] == best && best >= 0 ? 1.0f : 0.0f;
  return r;
}

double foreground_l2(const Tensor& final_image, const Tensor& reference, const Tensor& m) {
  if (final_image.shape() != reference.shape() || final_image.rank() != 3 || m.rank() != 2 ||
      m.dim(0) != final_image.dim(1) || m.dim(1) != final_image.dim(2)) {
    throw DimensionError("foreground_l2: image " + shape_to_string(final_image.shape()) + ", reference " +
                         shape_to_string(reference.shape()) + " and mask " + shape_to_string(m.shape()) +
                         " do not match");
  }
  const auto plane = static_cast<std::size_t>(m.numel());
  const auto channels = static_cast<std::size_t>(final_image.dim(0));
  auto a = final_image.data(), b = reference.data(), dm = m.data();
  double acc = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < plane; ++i) {
    if (dm[i] != 1.0f) continue;
    for (std::size_t c = 0; c < channels; ++c) {
      const double diff = double(a[c * plane + i]) - double(b[c * plane + i]);
      acc += diff * diff;
      ++n;
    }
  }
  if (n == 0) throw MetricError("foreground_l2: mask is empty");
  return acc / double(n);
}

Tensor mask_to_grid(const Tensor& m, int rows, int cols) {
  if (m.rank() != 2 || rows <= 0 || cols <= 0 || m.dim(0) % rows != 0 || m.dim(1) % cols != 0) {
    throw DimensionError("mask_to_grid: mask " + shape_to_string(m.shape()) + " is not a whole multiple of " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  const auto fy = m.dim(0) / rows, fx = m.dim(1) / cols, w = m.dim(1);
  Tensor out = Tensor::zeros({rows, cols});
  auto d = out.mutable_data();
  auto src = m.data();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double in = 0;
      for (std::int64_t y = r * fy; y < (r + 1) * fy; ++y)
        for (std::int64_t x = c * fx; x < (c + 1) * fx; ++x) in += src[static_cast<std::size_t>(y * w + x)];
      d[static_cast<std::size_t>(r * cols + c)] = 2 * in >= double(fy * fx) ? 1.0f : 0.0f;
    }
  return out;
}

double attention_concentration(const std::vector<Tensor>& maps, const Tensor& grid_mask) {
  if (grid_mask.rank() != 2) throw DimensionError("attention_concentration: grid mask must be [rows, cols]");
  const auto n = static_cast<std::size_t>(grid_mask.numel());
  auto gm = grid_mask.data();
  std::vector<std::size_t> inside;
  for (std::size_t i = 0; i < n; ++i)
    if (gm[i] != 0.0f) inside.push_back(i);
  if (inside.empty()) throw MetricError("attention_concentration: mask covers no grid cell");
  std::vector<char> in_mask(n, 0);
  for (auto i : inside) in_mask[i] = 1;

  double total = 0;
  std::size_t terms = 0;
  for (const auto& map : maps) {
    if (!map.defined()) continue;
    if (map.rank() != 4 || std::size_t(map.dim(2)) != n || std::size_t(map.dim(3)) != n) {
      throw DimensionError("attention_concentration: map " + shape_to_string(map.shape()) +
                           " does not match a grid of " + std::to_string(n) + " cells");
    }
    auto d = map.data();
    const auto slices = static_cast<std::size_t>(map.dim(0) * map.dim(1));
    for (std::size_t s = 0; s < slices; ++s) {
      const float* base = d.data() + s * n * n;
      double on = 0, all = 0;
      for (auto q : inside)
        for (std::size_t k = 0; k < n; ++k) {
          const double a = base[q * n + k];
          all += a;
          if (in_mask[k]) on += a;
        }
      if (all <= 0) throw MetricError("attention_concentration: in-mask queries carry no subject attention");
      total += on / all;
      ++terms;
    }
  }
  if (terms == 0) throw MetricError("attention_concentration: no attention maps");
  return total / double(terms);
}

}  // namespace fgp
