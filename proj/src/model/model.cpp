// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fgpaint/errors.hpp"
#include "fgpaint/model.hpp"

namespace fgp {

namespace {

// Separate streams keep the base initialization identical across variants
// that differ only in their subject encoder or adapter settings.
constexpr std::uint64_t kVaeStream = 11, kEncoderStream = 12, kBackboneStream = 13;

std::int64_t linear_count(std::int64_t in, std::int64_t out) { return in * out + out; }
std::int64_t conv_count(std::int64_t in, std::int64_t out, std::int64_t k) { return in * out * k * k + out; }

}  // namespace

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng vae_rng(derive_seed(cfg.seed, kVaeStream));
  Rng enc_rng(derive_seed(cfg.seed, kEncoderStream));
  Rng bb_rng(derive_seed(cfg.seed, kBackboneStream));
  vae_ = Vae(cfg_, params_, vae_rng);
  encoder_ = SubjectEncoder(cfg_, params_, enc_rng);
  backbone_ = Backbone(cfg_, params_, bb_rng);
}

SubjectFeature Model::encode_subject(const SubjectBatch& batch, const Tensor& semantic) const {
  return encoder_.encode(vae_, batch, semantic);
}

Tensor Model::predict_noise(const Tensor& x_t, const std::vector<int>& timesteps, const Tensor& text,
                            const SubjectFeature* subject, ForwardTrace* trace) const {
  return backbone_.forward(x_t, timesteps, text, subject, trace);
}

ParamCounts count_params(const ModelConfig& cfg) {
  cfg.validate();
  ParamCounts c;
  const std::int64_t w = cfg.width, lc = cfg.latent_channels, aw = cfg.adapter_width;
  const std::int64_t r = std::int64_t(cfg.mlp_ratio) * w, td = cfg.token_dim();

  c.vae = conv_count(3, 16, 3) + conv_count(16, 32, 3) + conv_count(32, lc, 3) + conv_count(lc, 32, 3) +
          conv_count(32, 16, 3) + conv_count(16, 16, 3) + conv_count(16, 3, 3) + 2 * lc;

  const std::int64_t stream = linear_count(w, 4 * w) + 4 * linear_count(w, w) + linear_count(w, r) + linear_count(r, w);
  c.base = linear_count(td, w) + 2 * linear_count(w, w) + linear_count(cfg.text_dim, w) +
           linear_count(cfg.text_dim, std::int64_t(cfg.text_tokens) * w) + linear_count(w, 2 * w) + linear_count(w, td);
  for (int b = 1; b <= cfg.num_blocks; ++b) {
    if (cfg.flavor == Flavor::Standard) {
      c.base += stream + 4 * linear_count(w, w);
      if (b > cfg.num_blocks / 2) c.base += linear_count(2 * w, w);
    } else {
      c.base += 2 * stream;
    }
    c.adapter += linear_count(aw, w) + 2 * w * w + 1;
  }

  if (cfg.subject_encoder == SubjectEncoderKind::Dual) {
    int n_s2 = 0;
    const int factor = cfg.latent_downsample * cfg.patch_size;
    for (int f = factor; f > 1; f /= 2) ++n_s2;
    std::int64_t in = 3, ch = cfg.shape_channels;
    int down = 1;
    std::vector<std::int64_t> chans;
    std::vector<int> downs;
    for (int l = 1; l <= 7; ++l) {
      if (l <= n_s2 && l > 1) ch *= 2;
      if (l <= n_s2) down *= 2;
      c.shape += conv_count(in, ch, 3);
      chans.push_back(ch);
      downs.push_back(down);
      in = ch;
    }
    for (int l : {1, 3, 5, 7}) {
      const auto i = static_cast<std::size_t>(l - 1);
      c.shape += conv_count(chans[i], cfg.tap_channels, factor / downs[i]);
    }
    c.fusion = 4 * (linear_count(td + cfg.tap_channels, 2 * aw) + linear_count(2 * aw, aw));
  } else {
    c.fusion = linear_count(td, 2 * aw) + linear_count(2 * aw, aw);
  }
  return c;
}

ParamCounts count_params(const ParamStore& store) {
  ParamCounts c;
  c.vae = store.count(ParamGroup::Vae);
  c.base = store.count(ParamGroup::Base);
  c.adapter = store.count(ParamGroup::Adapter);
  c.shape = store.count(ParamGroup::ShapeEncoder);
  c.fusion = store.count(ParamGroup::Fusion);
  return c;
}

}  // namespace fgp
