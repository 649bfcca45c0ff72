// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "fgpaint/tensor.hpp"

namespace fgp {

// Binary PPM (P6) from a [3, H, W] tensor in [0, 1]; values are clamped.
void write_ppm(const std::filesystem::path& path, const Tensor& rgb);
// Binary PGM (P5) from an [H, W] tensor. With `normalize` the tensor is
// scaled by its maximum first (all-zero stays black).
void write_pgm(const std::filesystem::path& path, const Tensor& gray, bool normalize = false);

// Inverse of the writers; values come back as byte/255.
Tensor read_ppm(const std::filesystem::path& path);
Tensor read_pgm(const std::filesystem::path& path);

}  // namespace fgp
