// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>

#include "fgpaint/config.hpp"
#include "fgpaint/model.hpp"

namespace fgp {

// Directory layout: manifest.txt with model config key=value lines plus
// `step` and `flavor`, and params/<name>.ptf for every parameter.
void save_checkpoint(const std::filesystem::path& dir, const Model& model, std::int64_t step);

struct LoadedCheckpoint {
  std::unique_ptr<Model> model;
  std::int64_t step = 0;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace fgp
