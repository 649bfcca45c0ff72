// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fgpaint/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "fgpaint/errors.hpp"

namespace fgp {

const char* to_string(Flavor f) { return f == Flavor::Standard ? "standard" : "mm"; }
const char* to_string(InjectSite s) { return s == InjectSite::Self ? "self" : "cross"; }
const char* to_string(SubjectEncoderKind k) { return k == SubjectEncoderKind::Dual ? "dual" : "vae_only"; }

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (num_blocks <= 0 || width <= 0 || heads <= 0 || patch_size <= 0 || image_size <= 0 || latent_downsample <= 0 ||
      latent_channels <= 0 || adapter_width <= 0 || num_taps <= 0 || text_dim <= 0 || text_tokens <= 0 ||
      shape_channels <= 0 || tap_channels <= 0 || mlp_ratio <= 0) {
    fail("model sizes must be positive");
  }
  if (num_blocks % (2 * num_taps) != 0) {
    fail("num_blocks (" + std::to_string(num_blocks) + ") must be divisible by 2*num_taps (" +
         std::to_string(2 * num_taps) + ")");
  }
  if (width % heads != 0) fail("width must be divisible by heads");
  if (head_dim() % 4 != 0) fail("head dimension must be divisible by 4 for 2D RoPE");
  if (latent_downsample != 4) fail("latent_downsample must be 4 (two stride-2 encoder stages)");
  if (image_size % (latent_downsample * patch_size) != 0) fail("image_size must be divisible by downsample*patch");
  const int factor = latent_downsample * patch_size;
  if (factor & (factor - 1)) fail("latent_downsample*patch_size must be a power of two");
  int stride2 = 0;
  for (int f = factor; f > 1; f /= 2) ++stride2;
  if (stride2 > 7) fail("grid factor too large for the 7-layer shape encoder");
  if (num_taps != 4 && subject_encoder == SubjectEncoderKind::Dual) {
    fail("the dual subject encoder exposes exactly 4 taps");
  }
  if (!(alpha >= 0 && alpha <= 1 && beta >= 0 && beta <= 1)) fail("alpha and beta must lie in [0, 1]");
  if (inject_site == InjectSite::Cross && flavor == Flavor::Mm) {
    fail("cross-attention injection needs the standard flavor (mm blocks have no text cross-attention)");
  }
  if (rope_base <= 1.0) fail("rope_base must exceed 1");
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out{};
  if (!(is >> out) || !is.eof()) throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("config key '" + key + "': expected 0/1, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  auto& m = cfg.model;
  auto& t = cfg.train;
  auto& e = cfg.eval;
  auto as_int = [&] { return parse_number<int>(key, value); };
  auto as_f64 = [&] { return parse_number<double>(key, value); };
  auto as_u64 = [&] { return parse_number<std::uint64_t>(key, value); };
  if (key == "flavor") {
    if (value == "standard") m.flavor = Flavor::Standard;
    else if (value == "mm") m.flavor = Flavor::Mm;
    else throw ConfigError("flavor must be standard or mm");
  } else if (key == "num_blocks") m.num_blocks = as_int();
  else if (key == "width") m.width = as_int();
  else if (key == "heads") m.heads = as_int();
  else if (key == "patch_size") m.patch_size = as_int();
  else if (key == "image_size") m.image_size = as_int();
  else if (key == "latent_downsample") m.latent_downsample = as_int();
  else if (key == "latent_channels") m.latent_channels = as_int();
  else if (key == "adapter_width") m.adapter_width = as_int();
  else if (key == "num_taps") m.num_taps = as_int();
  else if (key == "text_dim") m.text_dim = as_int();
  else if (key == "text_tokens") m.text_tokens = as_int();
  else if (key == "rope_base") m.rope_base = as_f64();
  else if (key == "shape_channels") m.shape_channels = as_int();
  else if (key == "tap_channels") m.tap_channels = as_int();
  else if (key == "mlp_ratio") m.mlp_ratio = as_int();
  else if (key == "alpha") m.alpha = static_cast<float>(as_f64());
  else if (key == "beta") m.beta = static_cast<float>(as_f64());
  else if (key == "anchor") m.anchor = parse_bool(key, value);
  else if (key == "inject_site") {
    if (value == "self") m.inject_site = InjectSite::Self;
    else if (value == "cross") m.inject_site = InjectSite::Cross;
    else throw ConfigError("inject_site must be self or cross");
  } else if (key == "subject_encoder") {
    if (value == "dual") m.subject_encoder = SubjectEncoderKind::Dual;
    else if (value == "vae_only") m.subject_encoder = SubjectEncoderKind::VaeOnly;
    else throw ConfigError("subject_encoder must be dual or vae_only");
  } else if (key == "seed") m.seed = as_u64();
  else if (key == "steps") t.steps = as_int();
  else if (key == "batch_size") t.batch_size = as_int();
  else if (key == "lr") t.lr = as_f64();
  else if (key == "warmup") t.warmup = as_int();
  else if (key == "grad_clip") t.grad_clip = as_f64();
  else if (key == "freeze_base") t.freeze_base = parse_bool(key, value);
  else if (key == "multi_aspect") t.multi_aspect = parse_bool(key, value);
  else if (key == "timesteps") t.timesteps = as_int();
  else if (key == "beta_start") t.beta_start = as_f64();
  else if (key == "beta_end") t.beta_end = as_f64();
  else if (key == "x0_clip") t.x0_clip = as_f64();
  else if (key == "vae_steps") t.vae_steps = as_int();
  else if (key == "vae_lr") t.vae_lr = as_f64();
  else if (key == "vae_batch") t.vae_batch = as_int();
  else if (key == "train_seed") t.seed = as_u64();
  else if (key == "log_every") t.log_every = as_int();
  else if (key == "eval_seed") e.seed = as_u64();
  else if (key == "seg_threshold") e.seg_threshold = static_cast<float>(as_f64());
  else if (key == "eval_max_samples") e.max_samples = as_int();
  else throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(n) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t"), b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    try {
      apply_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::map<std::string, std::string> model_config_values(const ModelConfig& m) {
  return {
      {"flavor", to_string(m.flavor)},
      {"num_blocks", std::to_string(m.num_blocks)},
      {"width", std::to_string(m.width)},
      {"heads", std::to_string(m.heads)},
      {"patch_size", std::to_string(m.patch_size)},
      {"image_size", std::to_string(m.image_size)},
      {"latent_downsample", std::to_string(m.latent_downsample)},
      {"latent_channels", std::to_string(m.latent_channels)},
      {"adapter_width", std::to_string(m.adapter_width)},
      {"num_taps", std::to_string(m.num_taps)},
      {"text_dim", std::to_string(m.text_dim)},
      {"text_tokens", std::to_string(m.text_tokens)},
      {"rope_base", fmt(m.rope_base)},
      {"shape_channels", std::to_string(m.shape_channels)},
      {"tap_channels", std::to_string(m.tap_channels)},
      {"mlp_ratio", std::to_string(m.mlp_ratio)},
      {"alpha", fmt(m.alpha)},
      {"beta", fmt(m.beta)},
      {"anchor", m.anchor ? "1" : "0"},
      {"inject_site", to_string(m.inject_site)},
      {"subject_encoder", to_string(m.subject_encoder)},
      {"seed", std::to_string(m.seed)},
  };
}

std::map<std::string, std::string> config_values(const RunConfig& c) {
  auto kv = model_config_values(c.model);
  const auto& t = c.train;
  kv["steps"] = std::to_string(t.steps);
  kv["batch_size"] = std::to_string(t.batch_size);
  kv["lr"] = fmt(t.lr);
  kv["warmup"] = std::to_string(t.warmup);
  kv["grad_clip"] = fmt(t.grad_clip);
  kv["freeze_base"] = t.freeze_base ? "1" : "0";
  kv["multi_aspect"] = t.multi_aspect ? "1" : "0";
  kv["timesteps"] = std::to_string(t.timesteps);
  kv["beta_start"] = fmt(t.beta_start);
  kv["beta_end"] = fmt(t.beta_end);
  kv["x0_clip"] = fmt(t.x0_clip);
  kv["vae_steps"] = std::to_string(t.vae_steps);
  kv["vae_lr"] = fmt(t.vae_lr);
  kv["vae_batch"] = std::to_string(t.vae_batch);
  kv["train_seed"] = std::to_string(t.seed);
  kv["log_every"] = std::to_string(t.log_every);
  kv["eval_seed"] = std::to_string(c.eval.seed);
  kv["seg_threshold"] = fmt(c.eval.seg_threshold);
  kv["eval_max_samples"] = std::to_string(c.eval.max_samples);
  return kv;
}

std::string config_text(const RunConfig& c) {
  std::string out;
  for (const auto& [k, v] : config_values(c)) out += k + "=" + v + "\n";
  return out;
}

std::string config_hash(const RunConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : config_text(c)) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace fgp
