// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fgpaint/tensor.hpp"

namespace fgp {

// PTF1 tensor files: "PTF1", u32 rank, rank × u32 dims, then the
// float32 payload, all little-endian.
std::vector<std::uint8_t> encode_ptf(const Tensor& t);
// `origin` is only used to label errors.
Tensor decode_ptf(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");

void write_ptf(const std::filesystem::path& path, const Tensor& t);
Tensor read_ptf(const std::filesystem::path& path);

}  // namespace fgp
