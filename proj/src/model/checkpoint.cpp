// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fgpaint/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "fgpaint/errors.hpp"
#include "fgpaint/ptf.hpp"

namespace fgp {

void save_checkpoint(const std::filesystem::path& dir, const Model& model, std::int64_t step) {
  std::filesystem::create_directories(dir / "params");
  std::ofstream os(dir / "manifest.txt");
  if (!os) throw FormatError((dir / "manifest.txt").string() + ": cannot open for writing");
  for (const auto& [k, v] : model_config_values(model.config())) os << k << '=' << v << '\n';
  os << "step=" << step << '\n';
  for (const auto& p : model.params().params()) write_ptf(dir / "params" / (p.name + ".ptf"), p.value);
  if (!os) throw FormatError((dir / "manifest.txt").string() + ": write failed");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest = dir / "manifest.txt";
  std::ifstream is(manifest);
  if (!is) throw FormatError(manifest.string() + ": cannot open checkpoint manifest");
  std::stringstream config_text;
  std::int64_t step = -1;
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("step=", 0) == 0) {
      step = std::stoll(line.substr(5));
    } else {
      config_text << line << '\n';
    }
  }
  if (step < 0) throw FormatError(manifest.string() + ": missing step");
  RunConfig rc;
  try {
    rc = parse_config(config_text.str(), manifest.string());
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }

  LoadedCheckpoint out;
  out.step = step;
  out.model = std::make_unique<Model>(rc.model);
  for (auto& p : out.model->params().params()) {
    const auto path = dir / "params" / (p.name + ".ptf");
    Tensor t = read_ptf(path);
    if (t.shape() != p.value.shape()) {
      throw FormatError(path.string() + ": shape " + shape_to_string(t.shape()) + " does not match parameter " +
                        shape_to_string(p.value.shape()));
    }
    std::copy(t.data().begin(), t.data().end(), p.value.mutable_data().begin());
  }
  return out;
}

}  // namespace fgp
