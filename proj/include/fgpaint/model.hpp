// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "fgpaint/adapter.hpp"
#include "fgpaint/config.hpp"
#include "fgpaint/data.hpp"
#include "fgpaint/nn.hpp"
#include "fgpaint/rope.hpp"

namespace fgp {

/// Toy latent autoencoder: two stride-2 conv stages down to a
/// latent_channels × (H/4) × (W/4) latent and a mirrored upsampling decoder.
/// The encoder doubles as the semantic subject branch.
class Vae {
 public:
  Vae() = default;
  Vae(const ModelConfig& cfg, ParamStore& store, Rng& rng);

  // Images [B, 3, H, W] -> raw latents [B, C, H/4, W/4].
  Tensor encode_raw(const Tensor& images) const;
  // Raw latents normalized per channel by the stored statistics.
  Tensor encode(const Tensor& images) const;
  Tensor normalize(const Tensor& raw) const;
  Tensor denormalize(const Tensor& latents) const;
  // Normalized latents -> images.
  Tensor decode(const Tensor& latents) const;
  // Stores per-channel mean/std of raw latents of `images`.
  void fit_normalization(const Tensor& images);

  Tensor shift() const { return shift_; }
  Tensor scale() const { return scale_; }

 private:
  std::vector<Conv2d> enc_;
  std::vector<Conv2d> dec_;
  Tensor shift_;  // [C]
  Tensor scale_;  // [C]
};

/// Per-tap fused subject features on the latent token grid.
struct SubjectFeature {
  std::vector<Tensor> taps;  // each [B, N, adapter_width]
  GridCoords coords;         // one cell per token, shared by every tap
  std::vector<int> tap_index;
};

struct SubjectBatch {
  Tensor image;  // [B, 3, H, W], background zeroed
  Tensor shape;  // [B, 3, H, W] stacked mask, depth, Sobel
};

SubjectBatch make_subject_batch(const std::vector<const Sample*>& samples);

// route[b - 1] = tap (1-based) for block b; mirrored groups share a tap.
std::vector<int> route_taps(int num_blocks, int num_taps);

/// Semantic branch (shared autoencoder encoder), 7-layer shape ConvNet with
/// four taps, and per-tap fusion MLPs.
class SubjectEncoder {
 public:
  SubjectEncoder() = default;
  SubjectEncoder(const ModelConfig& cfg, ParamStore& store, Rng& rng);

  // [B, 3, H, W] subject image -> [B, N, C·p²] tokens on the latent grid.
  Tensor encode_semantic(const Vae& vae, const Tensor& image) const;
  // Stacked [m, d, s] -> four taps, each [B, N, tap_channels].
  std::vector<Tensor> encode_shape(const Tensor& mds) const;
  // Two-layer MLP over concat(sem, tap) (or sem alone for the
  // semantic-only variant) to adapter width.
  Tensor fuse_features(const Tensor& sem, const Tensor& tap, int tap_level) const;

  // Full extractor. `semantic` may carry precomputed encode_semantic output.
  SubjectFeature encode(const Vae& vae, const SubjectBatch& batch, const Tensor& semantic = Tensor()) const;

  // Receptive field (pixels) of the conv stack feeding each tap.
  std::vector<int> tap_receptive_fields() const;

  struct FusionMlp {
    Linear fc1, fc2;
  };
  std::vector<FusionMlp>& fusion() { return fusion_; }
  std::vector<Conv2d>& shape_layers() { return convs_; }
  std::vector<Conv2d>& tap_heads() { return heads_; }

 private:
  ModelConfig cfg_;
  std::vector<Conv2d> convs_;
  std::vector<Conv2d> heads_;
  std::vector<FusionMlp> fusion_;
};

struct BlockInputs {
  const Tensor* text_tokens = nullptr;  // [B, T, width]
  const Tensor* cond = nullptr;         // [B, width] timestep + text summary
  const GridCoords* coords = nullptr;   // latent token cells
  const SubjectFeature* subject = nullptr;
  bool want_map = false;
};

/// One transformer block of either flavor with its attached adapter.
class Block {
 public:
  Block() = default;
  Block(const ModelConfig& cfg, int index, int routed_tap, ParamStore& store, Rng& rng);

  // Standard flavor: x is [B, N, width]. Mm flavor: the text stream is
  // updated in place through `text`. With no subject the adapter is detached
  // and the block is the vanilla block.
  Tensor forward(const Tensor& x, Tensor* text, const BlockInputs& in, Tensor* subject_map = nullptr) const;

  // Subject keys/values for this block; tap_level must equal the routed tap.
  SubjectKV subject_kv(const Tensor& tap_feature, int tap_level, const GridCoords& coords) const;

  int index() const { return index_; }
  int routed_tap() const { return tap_; }
  // 0 when the block has no skip input.
  int skip_source() const { return skip_source_; }
  const AdapterParams& adapter() const { return adapter_; }

  struct Stream {
    Linear mod;  // silu(cond) -> 4·width (shift1, scale1, shift2, scale2)
    Linear q, k, v, o;
    Linear fc1, fc2;
  };
  const Stream& latent_stream() const { return img_; }
  const Stream& text_stream() const { return txt_; }
  const Linear& skip_proj() const { return skip_; }

 private:
  Tensor standard_forward(const Tensor& x, const BlockInputs& in, Tensor* subject_map) const;
  Tensor mm_forward(const Tensor& x, Tensor* text, const BlockInputs& in, Tensor* subject_map) const;

  ModelConfig cfg_;
  int index_ = 0;
  int tap_ = 0;
  int skip_source_ = 0;
  Stream img_;
  Stream txt_;
  Linear skip_;
  Linear cq_, ck_, cv_, co_;  // text cross-attention (standard flavor)
  AdapterParams adapter_;
};

struct ForwardTrace {
  // Per block, subject-branch attention maps (undefined when detached).
  std::vector<Tensor> subject_maps;
};

/// Patchify, conditioning, blocks with skip merges, final modulated head.
class Backbone {
 public:
  Backbone() = default;
  Backbone(const ModelConfig& cfg, ParamStore& store, Rng& rng);

  // x_t [B, C, h, w] normalized latents; timesteps one per batch row;
  // text [B, text_dim]. Returns predicted noise of x_t's shape.
  Tensor forward(const Tensor& x_t, const std::vector<int>& timesteps, const Tensor& text,
                 const SubjectFeature* subject, ForwardTrace* trace = nullptr) const;

  const std::vector<Block>& blocks() const { return blocks_; }

 private:
  ModelConfig cfg_;
  Linear patch_in_;
  Linear t_fc1_, t_fc2_;
  Linear text_cond_;
  Linear text_tokens_;
  Linear final_mod_;
  Linear final_out_;
  std::vector<Block> blocks_;
};

// Sinusoidal embedding of integer timesteps, [B, dim].
Tensor timestep_embedding(const std::vector<int>& timesteps, int dim);

class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  Vae& vae() { return vae_; }
  const Vae& vae() const { return vae_; }
  const SubjectEncoder& encoder() const { return encoder_; }
  SubjectEncoder& encoder() { return encoder_; }
  const Backbone& backbone() const { return backbone_; }

  SubjectFeature encode_subject(const SubjectBatch& batch, const Tensor& semantic = Tensor()) const;
  Tensor predict_noise(const Tensor& x_t, const std::vector<int>& timesteps, const Tensor& text,
                       const SubjectFeature* subject, ForwardTrace* trace = nullptr) const;

 private:
  ModelConfig cfg_;
  ParamStore params_;
  Vae vae_;
  SubjectEncoder encoder_;
  Backbone backbone_;
};

struct ParamCounts {
  std::int64_t vae = 0, base = 0, adapter = 0, shape = 0, fusion = 0;
  std::int64_t total() const { return vae + base + adapter + shape + fusion; }
  // Adapter + subject-encoder share of all parameters.
  double trainable_ratio() const { return double(adapter + shape + fusion) / double(total()); }
};

// Closed-form counts matching what Model allocates for `cfg`.
ParamCounts count_params(const ModelConfig& cfg);
ParamCounts count_params(const ParamStore& store);

}  // namespace fgp
