// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fgpaint/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "fgpaint/errors.hpp"

namespace fgp {

namespace {

unsigned char to_byte(float v) {
  if (!std::isfinite(v)) v = 0.0f;
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void write_netpbm(const std::filesystem::path& path, const char* magic, std::int64_t w, std::int64_t h,
                  const std::vector<unsigned char>& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(path.string() + ": cannot open for writing");
  os << magic << "\n" << w << " " << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError(path.string() + ": write failed");
}

std::vector<unsigned char> read_netpbm(const std::filesystem::path& path, const std::string& magic,
                                       std::int64_t& w, std::int64_t& h, int channels) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(path.string() + ": cannot open");
  std::string m;
  int maxval = 0;
  is >> m >> w >> h >> maxval;
  if (m != magic || maxval != 255 || w <= 0 || h <= 0) throw FormatError(path.string() + ": unsupported header");
  is.get();
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w * h * channels));
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (is.gcount() != static_cast<std::streamsize>(bytes.size())) throw FormatError(path.string() + ": truncated");
  return bytes;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) {
    throw DimensionError("write_ppm: expects [3, H, W], got " + shape_to_string(rgb.shape()));
  }
  const auto h = rgb.dim(1), w = rgb.dim(2);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(3 * h * w));
  auto d = rgb.data();
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (std::int64_t c = 0; c < 3; ++c)
        bytes[static_cast<std::size_t>((y * w + x) * 3 + c)] = to_byte(d[static_cast<std::size_t>((c * h + y) * w + x)]);
  write_netpbm(path, "P6", w, h, bytes);
}

void write_pgm(const std::filesystem::path& path, const Tensor& gray, bool normalize) {
  if (gray.rank() != 2) throw DimensionError("write_pgm: expects [H, W], got " + shape_to_string(gray.shape()));
  float scale = 1.0f;
  if (normalize) {
    float mx = 0.0f;
    for (float v : gray.data()) mx = std::max(mx, v);
    scale = mx > 0.0f ? 1.0f / mx : 1.0f;
  }
  std::vector<unsigned char> bytes;
  bytes.reserve(static_cast<std::size_t>(gray.numel()));
  for (float v : gray.data()) bytes.push_back(to_byte(v * scale));
  write_netpbm(path, "P5", gray.dim(1), gray.dim(0), bytes);
}

Tensor read_ppm(const std::filesystem::path& path) {
  std::int64_t w = 0, h = 0;
  auto bytes = read_netpbm(path, "P6", w, h, 3);
  Tensor out = Tensor::zeros({3, h, w});
  auto d = out.mutable_data();
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (std::int64_t c = 0; c < 3; ++c)
        d[static_cast<std::size_t>((c * h + y) * w + x)] = bytes[static_cast<std::size_t>((y * w + x) * 3 + c)] / 255.0f;
  return out;
}

Tensor read_pgm(const std::filesystem::path& path) {
  std::int64_t w = 0, h = 0;
  auto bytes = read_netpbm(path, "P5", w, h, 1);
  Tensor out = Tensor::zeros({h, w});
  auto d = out.mutable_data();
  for (std::size_t i = 0; i < bytes.size(); ++i) d[i] = bytes[i] / 255.0f;
  return out;
}

}  // namespace fgp
