// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fgpaint/data.hpp"
#include "fgpaint/errors.hpp"

namespace fgp {

const char* to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::Ellipse: return "ellipse";
    case ShapeFamily::Rectangle: return "rectangle";
    case ShapeFamily::Polygon: return "polygon";
  }
  return "?";
}

const char* to_string(BackgroundFamily f) {
  switch (f) {
    case BackgroundFamily::Gradient: return "gradient";
    case BackgroundFamily::Texture: return "texture";
    case BackgroundFamily::Solid: return "solid";
  }
  return "?";
}

const char* to_string(Aspect a) {
  switch (a) {
    case Aspect::None: return "none";
    case Aspect::Square: return "1:1";
    case Aspect::Wide: return "16:9";
    case Aspect::Tall: return "9:16";
  }
  return "?";
}

ShapeFamily parse_shape_family(const std::string& s) {
  for (auto f : {ShapeFamily::Ellipse, ShapeFamily::Rectangle, ShapeFamily::Polygon})
    if (s == to_string(f)) return f;
  throw ConfigError("unknown shape family: " + s);
}

BackgroundFamily parse_background_family(const std::string& s) {
  for (auto f : {BackgroundFamily::Gradient, BackgroundFamily::Texture, BackgroundFamily::Solid})
    if (s == to_string(f)) return f;
  throw ConfigError("unknown background family: " + s);
}

Aspect parse_aspect(const std::string& s) {
  for (auto a : {Aspect::None, Aspect::Square, Aspect::Wide, Aspect::Tall})
    if (s == to_string(a)) return a;
  throw ConfigError("unknown aspect: " + s);
}

double aspect_ratio(Aspect a) {
  switch (a) {
    case Aspect::None: return 0.0;
    case Aspect::Square: return 1.0;
    case Aspect::Wide: return 16.0 / 9.0;
    case Aspect::Tall: return 9.0 / 16.0;
  }
  return 0.0;
}

BBox mask_bbox(const Tensor& mask) {
  if (mask.rank() != 2) throw DimensionError("mask_bbox: expects [H, W], got " + shape_to_string(mask.shape()));
  const int h = int(mask.dim(0)), w = int(mask.dim(1));
  BBox b{w, h, 0, 0};
  bool any = false;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask[y * w + x] != 0.0f) {
        any = true;
        b.x0 = std::min(b.x0, x);
        b.y0 = std::min(b.y0, y);
        b.x1 = std::max(b.x1, x + 1);
        b.y1 = std::max(b.y1, y + 1);
      }
  return any ? b : BBox{};
}

Tensor make_text_vec(BackgroundFamily bg, int quadrant, int size_bucket) {
  Tensor t = Tensor::zeros({kTextDim});
  auto d = t.mutable_data();
  d[static_cast<std::size_t>(bg)] = 1.0f;
  d[3 + static_cast<std::size_t>(quadrant)] = 1.0f;
  d[7 + static_cast<std::size_t>(size_bucket)] = 1.0f;
  return t;
}

int quadrant_of(const BBox& b, int height, int width) {
  const bool right = (b.x0 + b.x1) > width;
  const bool bottom = (b.y0 + b.y1) > height;
  return (bottom ? 2 : 0) + (right ? 1 : 0);
}

int size_bucket_of(double area_fraction, const SceneSpec& spec) {
  const double t = (area_fraction - spec.size_min) / std::max(spec.size_max - spec.size_min, 1e-12);
  return std::clamp(int(t * 3.0), 0, 2);
}

Tensor to_gray(const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw DimensionError("to_gray: expects [3, H, W]");
  const auto n = rgb.dim(1) * rgb.dim(2);
  Tensor g = Tensor::zeros({rgb.dim(1), rgb.dim(2)});
  auto src = rgb.data();
  auto dst = g.mutable_data();
  for (std::int64_t i = 0; i < n; ++i) {
    dst[static_cast<std::size_t>(i)] = 0.299f * src[static_cast<std::size_t>(i)] +
                                       0.587f * src[static_cast<std::size_t>(n + i)] +
                                       0.114f * src[static_cast<std::size_t>(2 * n + i)];
  }
  return g;
}

namespace {

struct Pt {
  double x, y;
};

bool inside_polygon(const std::vector<Pt>& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    if ((poly[i].y > y) != (poly[j].y > y) &&
        x < (poly[j].x - poly[i].x) * (y - poly[i].y) / (poly[j].y - poly[i].y) + poly[i].x) {
      in = !in;
    }
  }
  return in;
}

// Rasterizes one foreground attempt; pixel centers sit at (x + 0.5, y + 0.5).
std::vector<std::uint8_t> draw_shape(ShapeFamily family, double area, int h, int w, Rng& rng) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(h * w), 0);
  const double theta = rng.uniform(0.0, std::numbers::pi);
  const double ct = std::cos(theta), st = std::sin(theta);
  std::vector<Pt> poly;
  double half_w = 0, half_h = 0, extent = 0;
  switch (family) {
    case ShapeFamily::Ellipse:
    case ShapeFamily::Rectangle: {
      const double ratio = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
      const double base = family == ShapeFamily::Ellipse ? std::numbers::pi : 4.0;
      half_w = std::sqrt(area * ratio / base);
      half_h = std::sqrt(area / (ratio * base));
      extent = std::hypot(half_w, half_h);
      break;
    }
    case ShapeFamily::Polygon: {
      const int n = int(rng.uniform_int(5, 8));
      std::vector<double> angles, radii;
      for (int i = 0; i < n; ++i) {
        angles.push_back((i + rng.uniform(-0.3, 0.3)) * 2.0 * std::numbers::pi / n);
        radii.push_back(rng.uniform(0.6, 1.0));
      }
      double unit_area = 0;
      for (int i = 0; i < n; ++i) {
        const int j = (i + 1) % n;
        const Pt a{radii[i] * std::cos(angles[i]), radii[i] * std::sin(angles[i])};
        const Pt b{radii[j] * std::cos(angles[j]), radii[j] * std::sin(angles[j])};
        unit_area += 0.5 * (a.x * b.y - b.x * a.y);
      }
      const double scale = std::sqrt(area / std::abs(unit_area));
      for (int i = 0; i < n; ++i) {
        poly.push_back({scale * radii[i] * std::cos(angles[i]), scale * radii[i] * std::sin(angles[i])});
      }
      extent = scale;
      break;
    }
  }
  const double margin = 2.0;
  const double lo = extent + margin;
  if (2 * lo >= std::min(h, w)) return mask;
  const double cx = rng.uniform(lo, w - lo), cy = rng.uniform(lo, h - lo);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      // Shape frame.
      const double u = ct * dx + st * dy, v = -st * dx + ct * dy;
      bool in = false;
      switch (family) {
        case ShapeFamily::Ellipse: in = (u * u) / (half_w * half_w) + (v * v) / (half_h * half_h) <= 1.0; break;
        case ShapeFamily::Rectangle: in = std::abs(u) <= half_w && std::abs(v) <= half_h; break;
        case ShapeFamily::Polygon: in = inside_polygon(poly, dx, dy); break;
      }
      mask[static_cast<std::size_t>(y * w + x)] = in ? 1 : 0;
    }
  return mask;
}

// Euclidean distance from each inside pixel to the nearest outside pixel,
// normalized by the maximum; zero outside.
Tensor depth_from_mask(const std::vector<std::uint8_t>& mask, int h, int w) {
  std::vector<Pt> outside_edge;
  for (int y = -1; y <= h; ++y)
    for (int x = -1; x <= w; ++x) {
      const bool out = y < 0 || x < 0 || y >= h || x >= w || !mask[static_cast<std::size_t>(y * w + x)];
      if (!out) continue;
      // Only outside pixels touching the shape matter.
      bool touches = false;
      for (int dy = -1; dy <= 1 && !touches; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && xx >= 0 && yy < h && xx < w && mask[static_cast<std::size_t>(yy * w + xx)]) {
            touches = true;
            break;
          }
        }
      if (touches) outside_edge.push_back({double(x), double(y)});
    }
  Tensor d = Tensor::zeros({h, w});
  auto dd = d.mutable_data();
  float mx = 0.0f;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask[static_cast<std::size_t>(y * w + x)]) continue;
      double best = 1e300;
      for (const auto& p : outside_edge) best = std::min(best, (p.x - x) * (p.x - x) + (p.y - y) * (p.y - y));
      const float v = static_cast<float>(std::sqrt(best));
      dd[static_cast<std::size_t>(y * w + x)] = v;
      mx = std::max(mx, v);
    }
  if (mx > 0)
    for (auto& v : dd) v /= mx;
  return d;
}

void random_color(Rng& rng, double lum_lo, double lum_hi, float out[3]) {
  const double lum = rng.uniform(lum_lo, lum_hi);
  double c[3] = {rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08)};
  const double cl = 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
  for (int i = 0; i < 3; ++i) out[i] = static_cast<float>(std::clamp(lum + c[i] - cl, 0.0, 1.0));
}

Tensor draw_background(BackgroundFamily family, int h, int w, Rng& rng) {
  Tensor bg = Tensor::zeros({3, h, w});
  auto d = bg.mutable_data();
  const auto plane = static_cast<std::size_t>(h * w);
  float base[3];
  random_color(rng, 0.1, 0.3, base);
  switch (family) {
    case BackgroundFamily::Solid:
      for (int c = 0; c < 3; ++c) std::fill(d.begin() + c * plane, d.begin() + (c + 1) * plane, base[c]);
      break;
    case BackgroundFamily::Gradient: {
      float other[3];
      random_color(rng, 0.05, 0.35, other);
      const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double ux = std::cos(phi), uy = std::sin(phi);
      const double span = std::abs(ux) * w + std::abs(uy) * h;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double t = ((x - 0.5 * w) * ux + (y - 0.5 * h) * uy) / span + 0.5;
          t = std::clamp(t, 0.0, 1.0);
          for (int c = 0; c < 3; ++c)
            d[c * plane + static_cast<std::size_t>(y * w + x)] = static_cast<float>(base[c] + t * (other[c] - base[c]));
        }
      break;
    }
    case BackgroundFamily::Texture: {
      const double fx = rng.uniform(2.0, 5.0), fy = rng.uniform(2.0, 5.0);
      const double px = rng.uniform(0.0, 6.3), py = rng.uniform(0.0, 6.3);
      const double amp = rng.uniform(0.03, 0.06);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double v = amp * std::sin(2 * std::numbers::pi * fx * x / w + px) *
                           std::sin(2 * std::numbers::pi * fy * y / h + py);
          for (int c = 0; c < 3; ++c)
            d[c * plane + static_cast<std::size_t>(y * w + x)] = static_cast<float>(std::clamp(base[c] + v, 0.0, 1.0));
        }
      break;
    }
  }
  return bg;
}

}  // namespace

Sample gen_scene(std::uint64_t seed, const SceneSpec& spec) {
  if (spec.shapes.empty() || spec.backgrounds.empty()) throw ConfigError("scene spec has an empty family list");
  if (!(spec.size_min > 0 && spec.size_min <= spec.size_max && spec.size_max < 1)) {
    throw ConfigError("scene spec size range must satisfy 0 < size_min <= size_max < 1");
  }
  if (spec.height < 16 || spec.width < 16) throw ConfigError("scene spec image is too small");
  const int h = spec.height, w = spec.width;
  const double total = double(h) * w;

  Rng fg_rng(derive_seed(seed, 1));
  Rng bg_rng(derive_seed(seed, 2));

  Sample s;
  s.seed = seed;
  s.shape = spec.shapes[static_cast<std::size_t>(fg_rng.uniform_int(0, std::int64_t(spec.shapes.size()) - 1))];
  std::vector<std::uint8_t> mask;
  std::int64_t count = 0;
  bool ok = false;
  for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
    const double frac = fg_rng.uniform(spec.size_min, spec.size_max);
    mask = draw_shape(s.shape, frac * total, h, w, fg_rng);
    count = std::count(mask.begin(), mask.end(), std::uint8_t{1});
    ok = count >= std::ceil(spec.size_min * total) && count <= std::floor(spec.size_max * total);
  }
  if (!ok) throw ConfigError("could not place a foreground within the requested size range");
  float fg_color[3];
  random_color(fg_rng, 0.65, 0.95, fg_color);

  s.background =
      spec.backgrounds[static_cast<std::size_t>(bg_rng.uniform_int(0, std::int64_t(spec.backgrounds.size()) - 1))];
  Tensor bg = draw_background(s.background, h, w, bg_rng);

  const auto plane = static_cast<std::size_t>(h * w);
  s.cond.m = Tensor::zeros({h, w});
  s.cond.d = depth_from_mask(mask, h, w);
  s.cond.I = Tensor::zeros({3, h, w});
  s.x0 = bg;
  {
    auto m = s.cond.m.mutable_data();
    auto I = s.cond.I.mutable_data();
    auto x = s.x0.mutable_data();
    auto depth = s.cond.d.data();
    for (std::size_t i = 0; i < plane; ++i) {
      if (!mask[i]) continue;
      m[i] = 1.0f;
      // Mild shading toward the interior.
      const float shade = 0.94f + 0.06f * depth[i];
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = fg_color[c] * shade;
        I[c * plane + i] = v;
        x[c * plane + i] = v;
      }
    }
  }
  s.cond.s = sobel(to_gray(s.cond.I));
  s.cond.bbox = mask_bbox(s.cond.m);
  s.crop = {BBox{0, 0, w, h}, Aspect::None};
  s.quadrant = quadrant_of(s.cond.bbox, h, w);
  s.size_bucket = size_bucket_of(double(count) / total, spec);
  s.text_vec = make_text_vec(s.background, s.quadrant, s.size_bucket);
  return s;
}

std::vector<Sample> gen_dataset(std::uint64_t seed, std::size_t count, const SceneSpec& spec) {
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Sample s = gen_scene(derive_seed(seed, 1000 + i), spec);
    char id[32];
    std::snprintf(id, sizeof id, "s%05zu", i);
    s.id = id;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace fgp
