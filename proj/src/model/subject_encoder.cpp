// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fgpaint/errors.hpp"
#include "fgpaint/model.hpp"
#include "fgpaint/ops.hpp"

namespace fgp {

namespace {

int stride2_layers(const ModelConfig& cfg) {
  int n = 0;
  for (int f = cfg.latent_downsample * cfg.patch_size; f > 1; f /= 2) ++n;
  return n;
}

constexpr int kTapLayers[4] = {1, 3, 5, 7};

}  // namespace

SubjectBatch make_subject_batch(const std::vector<const Sample*>& samples) {
  if (samples.empty()) throw DimensionError("make_subject_batch: empty batch");
  const auto h = samples[0]->height(), w = samples[0]->width();
  const auto plane = static_cast<std::size_t>(h * w);
  std::vector<float> img, shp;
  img.reserve(samples.size() * 3 * plane);
  shp.reserve(samples.size() * 3 * plane);
  for (const Sample* s : samples) {
    if (s->height() != h || s->width() != w) throw DimensionError("make_subject_batch: mixed image sizes");
    img.insert(img.end(), s->cond.I.data().begin(), s->cond.I.data().end());
    for (const Tensor* t : {&s->cond.m, &s->cond.d, &s->cond.s}) shp.insert(shp.end(), t->data().begin(), t->data().end());
  }
  const auto b = static_cast<std::int64_t>(samples.size());
  return {Tensor({b, 3, h, w}, std::move(img)), Tensor({b, 3, h, w}, std::move(shp))};
}

std::vector<int> route_taps(int num_blocks, int num_taps) {
  if (num_blocks <= 0 || num_taps <= 0 || num_blocks % (2 * num_taps) != 0) {
    throw ConfigError("route_taps: num_blocks " + std::to_string(num_blocks) + " is not divisible by 2*num_taps " +
                      std::to_string(2 * num_taps));
  }
  const int group = num_blocks / (2 * num_taps);
  std::vector<int> route(static_cast<std::size_t>(num_blocks));
  for (int b = 1; b <= num_blocks; ++b) {
    const int g = (b - 1) / group + 1;
    route[static_cast<std::size_t>(b - 1)] = g <= num_taps ? g : 2 * num_taps + 1 - g;
  }
  return route;
}

SubjectEncoder::SubjectEncoder(const ModelConfig& cfg, ParamStore& store, Rng& rng) : cfg_(cfg) {
  const int sem_dim = cfg.token_dim();
  const int aw = cfg.adapter_width;
  if (cfg.subject_encoder == SubjectEncoderKind::Dual) {
    const int n_s2 = stride2_layers(cfg);
    int in = 3, ch = cfg.shape_channels;
    std::vector<int> layer_channels, layer_downsample;
    int down = 1;
    for (int l = 1; l <= 7; ++l) {
      const bool s2 = l <= n_s2;
      if (s2 && l > 1) ch *= 2;
      if (s2) down *= 2;
      convs_.push_back(make_conv(store, "shape.conv" + std::to_string(l), ParamGroup::ShapeEncoder, in, ch, 3,
                                 s2 ? 2 : 1, 1, rng));
      layer_channels.push_back(ch);
      layer_downsample.push_back(down);
      in = ch;
    }
    const int factor = cfg.latent_downsample * cfg.patch_size;
    for (int t = 0; t < 4; ++t) {
      const int l = kTapLayers[t];
      const int k = factor / layer_downsample[static_cast<std::size_t>(l - 1)];
      heads_.push_back(make_conv(store, "shape.tap" + std::to_string(t + 1), ParamGroup::ShapeEncoder,
                                 layer_channels[static_cast<std::size_t>(l - 1)], cfg.tap_channels, k, k, 0, rng));
    }
    for (int t = 0; t < 4; ++t) {
      const std::string name = "fusion.tap" + std::to_string(t + 1);
      fusion_.push_back({make_linear(store, name + ".fc1", ParamGroup::Fusion, sem_dim + cfg.tap_channels, 2 * aw, rng),
                         make_linear(store, name + ".fc2", ParamGroup::Fusion, 2 * aw, aw, rng)});
    }
  } else {
    fusion_.push_back({make_linear(store, "fusion.sem.fc1", ParamGroup::Fusion, sem_dim, 2 * aw, rng),
                       make_linear(store, "fusion.sem.fc2", ParamGroup::Fusion, 2 * aw, aw, rng)});
  }
}

Tensor SubjectEncoder::encode_semantic(const Vae& vae, const Tensor& image) const {
  const int factor = cfg_.latent_downsample * cfg_.patch_size;
  if (image.rank() != 4 || image.dim(2) % factor != 0 || image.dim(3) % factor != 0) {
    throw DimensionError("encode_semantic: image " + shape_to_string(image.shape()) + " not divisible by " +
                         std::to_string(factor));
  }
  return patchify(vae.encode_raw(image), cfg_.patch_size);
}

std::vector<Tensor> SubjectEncoder::encode_shape(const Tensor& mds) const {
  if (convs_.empty()) throw ConfigError("encode_shape: semantic-only encoder has no shape branch");
  if (mds.rank() != 4 || mds.dim(1) != 3) {
    throw DimensionError("encode_shape: expects stacked [B, 3, H, W] mask/depth/edges, got " +
                         shape_to_string(mds.shape()));
  }
  const int factor = cfg_.latent_downsample * cfg_.patch_size;
  if (mds.dim(2) % factor != 0 || mds.dim(3) % factor != 0) {
    throw DimensionError("encode_shape: spatial size not divisible by " + std::to_string(factor));
  }
  std::vector<Tensor> taps;
  Tensor h = mds;
  int next_tap = 0;
  for (int l = 1; l <= 7; ++l) {
    h = gelu(convs_[static_cast<std::size_t>(l - 1)](h));
    if (next_tap < 4 && l == kTapLayers[next_tap]) {
      taps.push_back(patchify(heads_[static_cast<std::size_t>(next_tap)](h), 1));
      ++next_tap;
    }
  }
  return taps;
}

Tensor SubjectEncoder::fuse_features(const Tensor& sem, const Tensor& tap, int tap_level) const {
  const bool dual = cfg_.subject_encoder == SubjectEncoderKind::Dual;
  const auto& mlp = fusion_[static_cast<std::size_t>(dual ? tap_level - 1 : 0)];
  if (dual && (tap_level < 1 || tap_level > 4)) throw RoutingError("fuse_features: tap level out of range");
  Tensor in = sem;
  if (dual) {
    if (!tap.defined() || tap.rank() != sem.rank() || tap.dim(0) != sem.dim(0) || tap.dim(-2) != sem.dim(-2)) {
      throw DimensionError("fuse_features: semantic " + shape_to_string(sem.shape()) + " and tap " +
                           (tap.defined() ? shape_to_string(tap.shape()) : std::string("<none>")) +
                           " are not on the same grid");
    }
    std::vector<Tensor> parts{sem, tap};
    in = concat_last(parts);
  }
  if (in.dim(-1) != mlp.fc1.in()) throw DimensionError("fuse_features: input width mismatch");
  return mlp.fc2(gelu(mlp.fc1(in)));
}

SubjectFeature SubjectEncoder::encode(const Vae& vae, const SubjectBatch& batch, const Tensor& semantic) const {
  Tensor sem = semantic.defined() ? semantic : encode_semantic(vae, batch.image);
  const int factor = cfg_.latent_downsample * cfg_.patch_size;
  const int rows = int(batch.image.dim(2)) / factor, cols = int(batch.image.dim(3)) / factor;
  if (sem.dim(-2) != std::int64_t(rows) * cols) throw DimensionError("subject encode: semantic grid mismatch");
  SubjectFeature f;
  f.coords = GridCoords::raster(rows, cols);
  if (cfg_.subject_encoder == SubjectEncoderKind::Dual) {
    auto taps = encode_shape(batch.shape);
    for (int t = 0; t < 4; ++t) {
      f.taps.push_back(fuse_features(sem, taps[static_cast<std::size_t>(t)], t + 1));
      f.tap_index.push_back(t + 1);
    }
  } else {
    Tensor fused = fuse_features(sem, Tensor(), 1);
    for (int t = 0; t < cfg_.num_taps; ++t) {
      f.taps.push_back(fused);
      f.tap_index.push_back(t + 1);
    }
  }
  return f;
}

std::vector<int> SubjectEncoder::tap_receptive_fields() const {
  std::vector<int> out;
  int rf = 1, jump = 1, next_tap = 0;
  for (int l = 1; l <= int(convs_.size()); ++l) {
    const auto& c = convs_[static_cast<std::size_t>(l - 1)];
    rf += int(c.w.dim(2) - 1) * jump;
    jump *= c.stride;
    if (next_tap < 4 && l == kTapLayers[next_tap]) {
      const auto& h = heads_[static_cast<std::size_t>(next_tap)];
      out.push_back(rf + int(h.w.dim(2) - 1) * jump);
      ++next_tap;
    }
  }
  return out;
}

}  // namespace fgp
