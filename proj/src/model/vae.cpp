// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "fgpaint/errors.hpp"
#include "fgpaint/model.hpp"
#include "fgpaint/ops.hpp"
#include "fgpaint/tape.hpp"

namespace fgp {

Vae::Vae(const ModelConfig& cfg, ParamStore& store, Rng& rng) {
  const int c = cfg.latent_channels;
  enc_.push_back(make_conv(store, "vae.enc0", ParamGroup::Vae, 3, 16, 3, 2, 1, rng));
  enc_.push_back(make_conv(store, "vae.enc1", ParamGroup::Vae, 16, 32, 3, 2, 1, rng));
  enc_.push_back(make_conv(store, "vae.enc2", ParamGroup::Vae, 32, c, 3, 1, 1, rng));
  dec_.push_back(make_conv(store, "vae.dec0", ParamGroup::Vae, c, 32, 3, 1, 1, rng));
  dec_.push_back(make_conv(store, "vae.dec1", ParamGroup::Vae, 32, 16, 3, 1, 1, rng));
  dec_.push_back(make_conv(store, "vae.dec2", ParamGroup::Vae, 16, 16, 3, 1, 1, rng));
  dec_.push_back(make_conv(store, "vae.dec3", ParamGroup::Vae, 16, 3, 3, 1, 1, rng));
  shift_ = store.add("vae.latent_shift", ParamGroup::Vae, Tensor::zeros({c}));
  scale_ = store.add("vae.latent_scale", ParamGroup::Vae, Tensor::full({c}, 1.0f));
}

Tensor Vae::encode_raw(const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw DimensionError("vae encode: expects [B, 3, H, W], got " + shape_to_string(images.shape()));
  }
  if (images.dim(2) % 4 != 0 || images.dim(3) % 4 != 0) {
    throw DimensionError("vae encode: image size " + shape_to_string(images.shape()) + " not divisible by 4");
  }
  Tensor h = gelu(enc_[0](images));
  h = gelu(enc_[1](h));
  return enc_[2](h);
}

namespace {

// Per-channel affine map a·x + b on [B, C, h, w] with constant a, b.
Tensor channel_affine(const Tensor& x, const std::vector<float>& a, const std::vector<float>& b) {
  const auto c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor fa = Tensor::zeros(x.shape()), fb = Tensor::zeros(x.shape());
  auto da = fa.mutable_data(), db = fb.mutable_data();
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const auto ch = static_cast<std::size_t>((i / plane) % c);
    da[static_cast<std::size_t>(i)] = a[ch];
    db[static_cast<std::size_t>(i)] = b[ch];
  }
  return add(mul(x, fa), fb);
}

}  // namespace

Tensor Vae::normalize(const Tensor& raw) const {
  if (raw.rank() != 4 || raw.dim(1) != shift_.numel()) throw DimensionError("vae normalize: channel mismatch");
  std::vector<float> a, b;
  for (std::int64_t c = 0; c < shift_.numel(); ++c) {
    a.push_back(1.0f / scale_[c]);
    b.push_back(-shift_[c] / scale_[c]);
  }
  return channel_affine(raw, a, b);
}

Tensor Vae::denormalize(const Tensor& latents) const {
  if (latents.rank() != 4 || latents.dim(1) != shift_.numel()) {
    throw DimensionError("vae denormalize: expects [B, " + std::to_string(shift_.numel()) + ", h, w], got " +
                         shape_to_string(latents.shape()));
  }
  std::vector<float> a(scale_.data().begin(), scale_.data().end());
  std::vector<float> b(shift_.data().begin(), shift_.data().end());
  return channel_affine(latents, a, b);
}

Tensor Vae::encode(const Tensor& images) const { return normalize(encode_raw(images)); }

Tensor Vae::decode(const Tensor& latents) const {
  Tensor h = gelu(dec_[0](denormalize(latents)));
  h = gelu(dec_[1](upsample_nearest(h, 2)));
  h = gelu(dec_[2](upsample_nearest(h, 2)));
  return dec_[3](h);
}

void Vae::fit_normalization(const Tensor& images) {
  Tape::Pause pause;
  // Statistics are taken with the identity normalization in place.
  const auto c = shift_.numel();
  std::vector<double> sum(static_cast<std::size_t>(c), 0.0), sq(static_cast<std::size_t>(c), 0.0);
  std::int64_t count = 0;
  const auto n = images.dim(0);
  const auto per = images.numel() / std::max<std::int64_t>(n, 1);
  for (std::int64_t start = 0; start < n; start += 32) {
    const auto len = std::min<std::int64_t>(32, n - start);
    std::vector<float> chunk(images.data().begin() + start * per, images.data().begin() + (start + len) * per);
    Shape s = images.shape();
    s[0] = len;
    Tensor raw = encode_raw(Tensor(s, std::move(chunk)));
    const auto plane = raw.dim(2) * raw.dim(3);
    for (std::int64_t i = 0; i < raw.numel(); ++i) {
      const auto ch = static_cast<std::size_t>((i / plane) % c);
      sum[ch] += raw[i];
      sq[ch] += double(raw[i]) * raw[i];
    }
    count += len * plane;
  }
  if (count == 0) throw NumericError("vae normalization: no images");
  auto sh = shift_.mutable_data();
  auto sc = scale_.mutable_data();
  for (std::size_t i = 0; i < static_cast<std::size_t>(c); ++i) {
    const double m = sum[i] / double(count);
    const double var = std::max(sq[i] / double(count) - m * m, 0.0);
    sh[i] = static_cast<float>(m);
    sc[i] = static_cast<float>(std::sqrt(var) + 1e-4);
  }
}

}  // namespace fgp
