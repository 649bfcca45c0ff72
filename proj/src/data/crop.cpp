// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "fgpaint/data.hpp"
#include "fgpaint/errors.hpp"

namespace fgp {

namespace {

Tensor crop_channels(const Tensor& t, const BBox& r) {
  const bool planar = t.rank() == 3;
  const std::int64_t c = planar ? t.dim(0) : 1;
  const std::int64_t h = t.dim(-2), w = t.dim(-1);
  Tensor out = planar ? Tensor::zeros({c, r.height(), r.width()}) : Tensor::zeros({r.height(), r.width()});
  auto src = t.data();
  auto dst = out.mutable_data();
  std::size_t k = 0;
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (int y = r.y0; y < r.y1; ++y)
      for (int x = r.x0; x < r.x1; ++x) dst[k++] = src[static_cast<std::size_t>((ch * h + y) * w + x)];
  return out;
}

Tensor resize_nearest(const Tensor& t, int nh, int nw) {
  const bool planar = t.rank() == 3;
  const std::int64_t c = planar ? t.dim(0) : 1;
  const std::int64_t h = t.dim(-2), w = t.dim(-1);
  Tensor out = planar ? Tensor::zeros({c, nh, nw}) : Tensor::zeros({nh, nw});
  auto src = t.data();
  auto dst = out.mutable_data();
  std::size_t k = 0;
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (int y = 0; y < nh; ++y) {
      const auto sy = std::min<std::int64_t>(h - 1, (2 * y + 1) * h / (2 * nh));
      for (int x = 0; x < nw; ++x) {
        const auto sx = std::min<std::int64_t>(w - 1, (2 * x + 1) * w / (2 * nw));
        dst[k++] = src[static_cast<std::size_t>((ch * h + sy) * w + sx)];
      }
    }
  return out;
}

void check_aspect(Aspect aspect) {
  if (aspect == Aspect::None) throw ConfigError("crop: aspect must be 1:1, 16:9 or 9:16");
}

}  // namespace

CropBounds crop_area_bounds(const BBox& bbox, int height, int width, Aspect aspect) {
  check_aspect(aspect);
  const double r = aspect_ratio(aspect);
  const double h_min = std::max(double(bbox.height()), bbox.width() / r);
  const double h_max = std::min(double(height), width / r);
  if (bbox.area() <= 0 || h_min > h_max + 1e-9) {
    throw InfeasibleCropError("subject bbox " + std::to_string(bbox.width()) + "x" + std::to_string(bbox.height()) +
                              " does not fit any " + to_string(aspect) + " window of a " + std::to_string(width) +
                              "x" + std::to_string(height) + " image");
  }
  return {r * h_min * h_min, r * h_max * h_max};
}

Sample crop_with_area(const Sample& sample, Aspect aspect, double area, std::uint64_t seed) {
  const int H = sample.height(), W = sample.width();
  const BBox& b = sample.cond.bbox;
  crop_area_bounds(b, H, W, aspect);
  const double r = aspect_ratio(aspect);
  const double h_target = std::sqrt(std::max(area, 0.0) / r);

  // Integer heights whose rounded width keeps the window around the bbox
  // and inside the image; take the one closest to the target.
  int best_h = -1, best_w = -1;
  double best_gap = 1e300;
  for (int h = std::max(1, b.height()); h <= H; ++h) {
    const int w = int(std::lround(h * r));
    if (w < b.width() || w > W) continue;
    const double gap = std::abs(h - h_target);
    if (gap < best_gap) best_gap = gap, best_h = h, best_w = w;
  }
  if (best_h < 0) {
    throw InfeasibleCropError(std::string("no integer ") + to_string(aspect) + " window contains the subject bbox");
  }

  Rng rng(seed);
  const int x_lo = std::max(0, b.x1 - best_w), x_hi = std::min(b.x0, W - best_w);
  const int y_lo = std::max(0, b.y1 - best_h), y_hi = std::min(b.y0, H - best_h);
  const int x = int(rng.uniform_int(x_lo, x_hi));
  const int y = int(rng.uniform_int(y_lo, y_hi));
  const BBox rect{x, y, x + best_w, y + best_h};

  Sample out = sample;
  out.x0 = crop_channels(sample.x0, rect);
  out.cond.I = crop_channels(sample.cond.I, rect);
  out.cond.m = crop_channels(sample.cond.m, rect);
  out.cond.d = crop_channels(sample.cond.d, rect);
  out.cond.s = crop_channels(sample.cond.s, rect);
  out.cond.bbox = {b.x0 - x, b.y0 - y, b.x1 - x, b.y1 - y};
  out.crop = {BBox{sample.crop.rect.x0 + x, sample.crop.rect.y0 + y, sample.crop.rect.x0 + x + best_w,
                   sample.crop.rect.y0 + y + best_h},
              aspect};
  out.quadrant = quadrant_of(out.cond.bbox, best_h, best_w);
  out.text_vec = make_text_vec(out.background, out.quadrant, out.size_bucket);
  return out;
}

Sample crop_sampler(const Sample& sample, Aspect aspect, std::uint64_t seed) {
  const auto bounds = crop_area_bounds(sample.cond.bbox, sample.height(), sample.width(), aspect);
  Rng rng(derive_seed(seed, 7));
  double area = bounds.area_lo;
  const double range = bounds.area_hi - bounds.area_lo;
  if (range > 1e-9) {
    const double mean = bounds.area_lo + 0.5 * range, sd = 0.25 * range;
    do {
      area = mean + sd * rng.normal();
    } while (area < bounds.area_lo || area > bounds.area_hi);
  }
  return crop_with_area(sample, aspect, area, derive_seed(seed, 8));
}

Sample resize_sample(const Sample& sample, int height, int width) {
  if (height <= 0 || width <= 0) throw DimensionError("resize_sample: non-positive size");
  Sample out = sample;
  out.x0 = resize_nearest(sample.x0, height, width);
  out.cond.I = resize_nearest(sample.cond.I, height, width);
  out.cond.m = resize_nearest(sample.cond.m, height, width);
  out.cond.d = resize_nearest(sample.cond.d, height, width);
  out.cond.s = resize_nearest(sample.cond.s, height, width);
  out.cond.bbox = mask_bbox(out.cond.m);
  return out;
}

}  // namespace fgp
