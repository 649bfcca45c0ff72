// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fgpaint/ptf.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "fgpaint/errors.hpp"

namespace fgp {

namespace {

constexpr char kMagic[4] = {'P', 'T', 'F', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(in[pos + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_ptf(const Tensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + 4 * t.rank() + 4 * static_cast<std::size_t>(t.numel()));
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_ptf(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 8 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError(origin + ": not a PTF1 file");
  }
  const auto rank = get_u32(bytes, 4);
  std::size_t pos = 8;
  if (bytes.size() < pos + 4ull * rank) throw FormatError(origin + ": truncated PTF1 header");
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i, pos += 4) shape.push_back(get_u32(bytes, pos));
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  if (bytes.size() != pos + 4 * n) {
    throw FormatError(origin + ": PTF1 payload has " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                      std::to_string(4 * n) + (bytes.size() < pos + 4 * n ? " (truncated)" : ""));
  }
  FloatBuffer data(n);
  for (std::size_t i = 0; i < n; ++i, pos += 4) data[i] = std::bit_cast<float>(get_u32(bytes, pos));
  return Tensor::from_buffer(std::move(shape), std::move(data));
}

void write_ptf(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode_ptf(t);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(path.string() + ": cannot open for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError(path.string() + ": write failed");
}

Tensor read_ptf(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(path.string() + ": cannot open");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_ptf(bytes, path.string());
}

}  // namespace fgp
