// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <map>
#include <sstream>

#include "fgpaint/data.hpp"
#include "fgpaint/errors.hpp"
#include "fgpaint/ptf.hpp"

namespace fgp {

namespace {

std::string bbox_str(const BBox& b) {
  return std::to_string(b.x0) + "," + std::to_string(b.y0) + "," + std::to_string(b.x1) + "," + std::to_string(b.y1);
}

BBox parse_bbox(const std::string& s, const std::string& where) {
  BBox b;
  char c1 = 0, c2 = 0, c3 = 0;
  std::istringstream is(s);
  if (!(is >> b.x0 >> c1 >> b.y0 >> c2 >> b.x1 >> c3 >> b.y1) || c1 != ',' || c2 != ',' || c3 != ',') {
    throw FormatError(where + ": malformed rectangle '" + s + "'");
  }
  return b;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw FormatError((dir / "manifest.txt").string() + ": cannot open for writing");
  for (const auto& s : samples) {
    if (s.id.empty() || s.id.find_first_of(" \t\n=/") != std::string::npos) {
      throw FormatError("sample id '" + s.id + "' is not a valid file stem");
    }
    manifest << "id=" << s.id << " seed=" << s.seed << " aspect=" << to_string(s.crop.aspect)
             << " bbox=" << bbox_str(s.cond.bbox) << " crop=" << bbox_str(s.crop.rect) << " shape=" << to_string(s.shape)
             << " background=" << to_string(s.background) << " quadrant=" << s.quadrant
             << " size_bucket=" << s.size_bucket << "\n";
    write_ptf(dir / (s.id + ".x0.ptf"), s.x0);
    write_ptf(dir / (s.id + ".m.ptf"), s.cond.m);
    write_ptf(dir / (s.id + ".d.ptf"), s.cond.d);
    write_ptf(dir / (s.id + ".s.ptf"), s.cond.s);
    write_ptf(dir / (s.id + ".I.ptf"), s.cond.I);
  }
  if (!manifest) throw FormatError((dir / "manifest.txt").string() + ": write failed");
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.txt";
  std::ifstream manifest(manifest_path);
  if (!manifest) throw FormatError(manifest_path.string() + ": cannot open");
  std::vector<Sample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const std::string where = manifest_path.string() + ":" + std::to_string(line_no);
    std::map<std::string, std::string> kv;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) throw FormatError(where + ": expected key=value, got '" + tok + "'");
      kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    auto need = [&](const char* key) -> const std::string& {
      auto it = kv.find(key);
      if (it == kv.end()) throw FormatError(where + ": missing field '" + key + "'");
      return it->second;
    };
    Sample s;
    try {
      s.id = need("id");
      s.seed = std::stoull(need("seed"));
      s.crop.aspect = parse_aspect(need("aspect"));
      s.shape = parse_shape_family(need("shape"));
      s.background = parse_background_family(need("background"));
      s.quadrant = std::stoi(need("quadrant"));
      s.size_bucket = std::stoi(need("size_bucket"));
    } catch (const FormatError&) {
      throw;
    } catch (const std::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
    if (s.quadrant < 0 || s.quadrant > 3 || s.size_bucket < 0 || s.size_bucket > 2) {
      throw FormatError(where + ": class field out of range");
    }
    s.cond.bbox = parse_bbox(need("bbox"), where);
    s.crop.rect = parse_bbox(need("crop"), where);
    s.x0 = read_ptf(dir / (s.id + ".x0.ptf"));
    s.cond.m = read_ptf(dir / (s.id + ".m.ptf"));
    s.cond.d = read_ptf(dir / (s.id + ".d.ptf"));
    s.cond.s = read_ptf(dir / (s.id + ".s.ptf"));
    s.cond.I = read_ptf(dir / (s.id + ".I.ptf"));
    if (s.x0.rank() != 3 || s.x0.dim(0) != 3) throw FormatError(where + ": x0 must be [3, H, W]");
    const Shape plane{s.x0.dim(1), s.x0.dim(2)};
    if (s.cond.I.shape() != s.x0.shape() || s.cond.m.shape() != plane || s.cond.d.shape() != plane ||
        s.cond.s.shape() != plane) {
      throw FormatError(where + ": channel files of sample " + s.id + " disagree on image size");
    }
    if (!(mask_bbox(s.cond.m) == s.cond.bbox)) throw FormatError(where + ": bbox does not match mask of " + s.id);
    s.text_vec = make_text_vec(s.background, s.quadrant, s.size_bucket);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace fgp
