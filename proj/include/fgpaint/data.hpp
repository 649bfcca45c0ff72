// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fgpaint/rng.hpp"
#include "fgpaint/tensor.hpp"

namespace fgp {

enum class ShapeFamily { Ellipse, Rectangle, Polygon };
enum class BackgroundFamily { Gradient, Texture, Solid };
enum class Aspect { None, Square, Wide, Tall };

const char* to_string(ShapeFamily f);
const char* to_string(BackgroundFamily f);
// "none", "1:1", "16:9", "9:16".
const char* to_string(Aspect a);
ShapeFamily parse_shape_family(const std::string& s);
BackgroundFamily parse_background_family(const std::string& s);
Aspect parse_aspect(const std::string& s);
// Width / height; 0 for Aspect::None.
double aspect_ratio(Aspect a);

// Half-open pixel rectangle [x0, x1) × [y0, y1).
struct BBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  std::int64_t area() const { return std::int64_t(width()) * height(); }
  bool contains(const BBox& o) const { return x0 <= o.x0 && y0 <= o.y0 && x1 >= o.x1 && y1 >= o.y1; }
  bool operator==(const BBox&) const = default;
};

// Tight bounding rectangle of the nonzero pixels of an [H, W] mask.
BBox mask_bbox(const Tensor& mask);

struct SubjectConditioning {
  Tensor I;  // [3, H, W], zero outside the mask
  Tensor m;  // [H, W] in {0, 1}
  Tensor d;  // [H, W] in [0, 1], > 0 exactly inside the mask
  Tensor s;  // [H, W] in [0, 1]
  BBox bbox;
};

struct CropMeta {
  BBox rect;  // in source-image pixels
  Aspect aspect = Aspect::None;
};

struct SceneSpec {
  std::vector<ShapeFamily> shapes{ShapeFamily::Ellipse, ShapeFamily::Rectangle, ShapeFamily::Polygon};
  std::vector<BackgroundFamily> backgrounds{BackgroundFamily::Gradient, BackgroundFamily::Texture,
                                            BackgroundFamily::Solid};
  // Foreground area as a fraction of the image.
  double size_min = 0.08;
  double size_max = 0.25;
  int height = 64;
  int width = 64;
};

inline constexpr int kTextDim = 10;

struct Sample {
  std::string id;
  std::uint64_t seed = 0;
  Tensor x0;  // [3, H, W] in [0, 1]
  SubjectConditioning cond;
  Tensor text_vec;  // [kTextDim]
  CropMeta crop;
  ShapeFamily shape = ShapeFamily::Ellipse;
  BackgroundFamily background = BackgroundFamily::Solid;
  int quadrant = 0;     // 0 TL, 1 TR, 2 BL, 3 BR by bbox center
  int size_bucket = 0;  // 0 small, 1 medium, 2 large

  int height() const { return int(x0.dim(1)); }
  int width() const { return int(x0.dim(2)); }
};

// One-hot background (3) + quadrant (4) + size bucket (3).
Tensor make_text_vec(BackgroundFamily bg, int quadrant, int size_bucket);
int quadrant_of(const BBox& b, int height, int width);
int size_bucket_of(double area_fraction, const SceneSpec& spec);

// Luminance weights 0.299 / 0.587 / 0.114 over a [3, H, W] image.
Tensor to_gray(const Tensor& rgb);

// Deterministic procedural scene. Foreground and background draw from
// separate seed-derived streams, so the subject does not depend on the
// background family.
Sample gen_scene(std::uint64_t seed, const SceneSpec& spec);
std::vector<Sample> gen_dataset(std::uint64_t seed, std::size_t count, const SceneSpec& spec);

// Gradient magnitude with the 3×3 Sobel kernels and replicate padding.
Tensor sobel_raw(const Tensor& gray);
// sobel_raw scaled by its maximum (all zero stays zero).
Tensor sobel(const Tensor& gray);

struct CropBounds {
  double area_lo = 0;
  double area_hi = 0;
};
// Area range for crops of `aspect` around `bbox`; throws InfeasibleCropError
// when no aspect-conforming window containing bbox fits the image.
CropBounds crop_area_bounds(const BBox& bbox, int height, int width, Aspect aspect);
// Crop with a given target area; placement drawn from `seed`.
Sample crop_with_area(const Sample& sample, Aspect aspect, double area, std::uint64_t seed);
// Truncated-normal area draw between the bounds, then crop_with_area.
Sample crop_sampler(const Sample& sample, Aspect aspect, std::uint64_t seed);
// Nearest-neighbour resize of every channel; the mask stays binary.
Sample resize_sample(const Sample& sample, int height, int width);

// Dataset directory: manifest.txt plus {id}.{x0,m,d,s,I}.ptf per sample.
void save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples);
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

}  // namespace fgp
