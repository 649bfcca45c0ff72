// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace fgp {

enum class Flavor { Standard, Mm };
enum class InjectSite { Self, Cross };
enum class SubjectEncoderKind { Dual, VaeOnly };

const char* to_string(Flavor f);
const char* to_string(InjectSite s);
const char* to_string(SubjectEncoderKind k);

struct ModelConfig {
  Flavor flavor = Flavor::Standard;
  int num_blocks = 8;
  int width = 64;
  int heads = 4;
  int patch_size = 2;
  int image_size = 64;
  int latent_downsample = 4;
  int latent_channels = 8;
  int adapter_width = 64;
  int num_taps = 4;
  int text_dim = 10;
  int text_tokens = 4;
  double rope_base = 10000.0;
  int shape_channels = 8;
  int tap_channels = 32;
  int mlp_ratio = 4;
  float alpha = 1.0f;
  float beta = 1.0f;
  // Subject keys take RoPE at their own grid cells; off = every subject
  // token at the origin.
  bool anchor = true;
  InjectSite inject_site = InjectSite::Self;
  SubjectEncoderKind subject_encoder = SubjectEncoderKind::Dual;
  std::uint64_t seed = 0;

  int latent_size() const { return image_size / latent_downsample; }
  int grid_size() const { return latent_size() / patch_size; }
  int token_dim() const { return latent_channels * patch_size * patch_size; }
  int head_dim() const { return width / heads; }
  // Throws ConfigError on any broken precondition.
  void validate() const;
};

struct TrainConfig {
  int steps = 2000;
  int batch_size = 16;
  double lr = 1e-4;
  int warmup = 1000;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
  bool freeze_base = false;
  bool multi_aspect = false;
  int timesteps = 100;
  double beta_start = 0.1;  // scaled by 1/timesteps
  double beta_end = 20.0;   // scaled by 1/timesteps
  // Sampling clamps the predicted clean latent to [-x0_clip, x0_clip]; 0
  // disables. Normalized training latents stay within about 5.5.
  double x0_clip = 6.0;
  int vae_steps = 1500;
  double vae_lr = 2e-3;
  int vae_batch = 16;
  std::uint64_t seed = 0;
  int log_every = 1;
};

struct EvalConfig {
  std::uint64_t seed = 1234;
  float seg_threshold = 0.5f;
  int max_samples = 0;  // 0 = whole dataset
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
};

// Flat key=value text; '#' starts a comment. Unknown keys are errors.
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);
void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

std::map<std::string, std::string> model_config_values(const ModelConfig& m);
std::map<std::string, std::string> config_values(const RunConfig& c);
std::string config_text(const RunConfig& c);
// FNV-1a 64 over config_text, as 16 hex digits.
std::string config_hash(const RunConfig& c);

}  // namespace fgp
