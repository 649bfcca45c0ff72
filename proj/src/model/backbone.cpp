// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "fgpaint/errors.hpp"
#include "fgpaint/model.hpp"
#include "fgpaint/ops.hpp"

namespace fgp {

namespace {

Block::Stream make_stream(ParamStore& store, const std::string& name, const ModelConfig& cfg, Rng& rng) {
  const int w = cfg.width, r = cfg.mlp_ratio * cfg.width;
  Block::Stream s;
  s.mod = make_linear(store, name + ".mod", ParamGroup::Base, w, 4 * w, rng);
  s.q = make_linear(store, name + ".q", ParamGroup::Base, w, w, rng);
  s.k = make_linear(store, name + ".k", ParamGroup::Base, w, w, rng);
  s.v = make_linear(store, name + ".v", ParamGroup::Base, w, w, rng);
  s.o = make_linear(store, name + ".o", ParamGroup::Base, w, w, rng);
  s.fc1 = make_linear(store, name + ".fc1", ParamGroup::Base, w, r, rng);
  s.fc2 = make_linear(store, name + ".fc2", ParamGroup::Base, r, w, rng);
  return s;
}

struct Modulation {
  Tensor shift1, scale1, shift2, scale2;
};

Modulation modulation(const Block::Stream& s, const Tensor& cond, std::int64_t w) {
  Tensor m = s.mod(silu(cond));
  return {slice_last(m, 0, w), slice_last(m, w, w), slice_last(m, 2 * w, w), slice_last(m, 3 * w, w)};
}

Tensor mlp(const Block::Stream& s, const Tensor& x, const Modulation& mod) {
  return add(x, s.fc2(gelu(s.fc1(adaln_modulate(x, mod.shift2, mod.scale2)))));
}

// Latent-query rows × subject-key columns of an mm attention map.
Tensor subject_block(const Tensor& map, std::int64_t text, std::int64_t latent, std::int64_t subject) {
  const auto b = map.dim(0), h = map.dim(1), nq = map.dim(2), nk = map.dim(3);
  Tensor out = Tensor::zeros({b, h, latent, subject});
  auto src = map.data();
  auto dst = out.mutable_data();
  std::size_t k = 0;
  for (std::int64_t bh = 0; bh < b * h; ++bh)
    for (std::int64_t i = 0; i < latent; ++i)
      for (std::int64_t j = 0; j < subject; ++j)
        dst[k++] = src[static_cast<std::size_t>((bh * nq + text + i) * nk + text + latent + j)];
  return out;
}

}  // namespace

Block::Block(const ModelConfig& cfg, int index, int routed_tap, ParamStore& store, Rng& rng)
    : cfg_(cfg), index_(index), tap_(routed_tap) {
  const std::string name = "block" + std::to_string(index);
  const int w = cfg.width;
  img_ = make_stream(store, name + ".img", cfg, rng);
  if (cfg.flavor == Flavor::Standard) {
    cq_ = make_linear(store, name + ".cross.q", ParamGroup::Base, w, w, rng);
    ck_ = make_linear(store, name + ".cross.k", ParamGroup::Base, w, w, rng);
    cv_ = make_linear(store, name + ".cross.v", ParamGroup::Base, w, w, rng);
    co_ = make_linear(store, name + ".cross.o", ParamGroup::Base, w, w, rng);
    if (index > cfg.num_blocks / 2) {
      skip_source_ = cfg.num_blocks + 1 - index;
      skip_ = make_linear(store, name + ".skip", ParamGroup::Base, 2 * w, w, rng);
    }
  } else {
    txt_ = make_stream(store, name + ".txt", cfg, rng);
  }
  adapter_ = make_adapter(store, name + ".adapter", cfg.adapter_width, w, cfg.alpha, cfg.beta, rng);
}

SubjectKV Block::subject_kv(const Tensor& tap_feature, int tap_level, const GridCoords& coords) const {
  if (tap_level != tap_) {
    throw RoutingError("block " + std::to_string(index_) + " is routed to tap " + std::to_string(tap_) +
                       " but received tap " + std::to_string(tap_level));
  }
  SubjectKV kv = project_subject(tap_feature, adapter_);
  if (cfg_.anchor) {
    kv.k = anchor_positions(kv.k, coords.cells(), cfg_.rope_base, cfg_.heads);
  } else {
    const auto origin = GridCoords::origin(coords.rows(), coords.cols(), coords.size());
    kv.k = anchor_positions(kv.k, origin.cells(), cfg_.rope_base, cfg_.heads);
  }
  return kv;
}

Tensor Block::forward(const Tensor& x, Tensor* text, const BlockInputs& in, Tensor* subject_map) const {
  if (!in.cond || !in.coords) throw DimensionError("block forward: missing conditioning or coordinates");
  if (x.rank() != 3 || x.dim(-1) != cfg_.width || x.dim(1) != std::int64_t(in.coords->size())) {
    throw DimensionError("block forward: latent tokens " + shape_to_string(x.shape()) + " do not match the " +
                         std::to_string(in.coords->rows()) + "x" + std::to_string(in.coords->cols()) + " grid");
  }
  return cfg_.flavor == Flavor::Standard ? standard_forward(x, in, subject_map) : mm_forward(x, text, in, subject_map);
}

namespace {

const Tensor& routed_feature(const SubjectFeature& s, int tap, int block) {
  for (std::size_t i = 0; i < s.tap_index.size(); ++i)
    if (s.tap_index[i] == tap) return s.taps[i];
  throw RoutingError("block " + std::to_string(block) + " needs tap " + std::to_string(tap) +
                     " which the subject feature does not provide");
}

}  // namespace

Tensor Block::standard_forward(const Tensor& x_in, const BlockInputs& in, Tensor* subject_map) const {
  const int w = cfg_.width, heads = cfg_.heads;
  const auto cells = in.coords->cells();
  const Modulation mod = modulation(img_, *in.cond, w);

  Tensor h = adaln_modulate(x_in, mod.shift1, mod.scale1);
  Tensor q = rope_2d_apply(img_.q(h), cells, cfg_.rope_base, heads);
  Tensor k = rope_2d_apply(img_.k(h), cells, cfg_.rope_base, heads);
  Tensor v = img_.v(h);

  std::optional<SubjectKV> kv;
  if (in.subject) {
    kv = subject_kv(routed_feature(*in.subject, tap_, index_), tap_, in.subject->coords);
  }
  const bool self_site = cfg_.inject_site == InjectSite::Self;

  Tensor z;
  if (kv && self_site) {
    auto r = inject_standard(q, k, v, kv->k, kv->v, adapter_, heads, in.want_map);
    z = r.z;
    if (subject_map) *subject_map = r.subject_map;
  } else {
    z = multihead_attention(q, k, v, heads);
  }
  Tensor x = add(x_in, img_.o(z));

  if (!in.text_tokens) throw DimensionError("standard block needs text tokens");
  Tensor cq = cq_(layer_norm(x));
  Tensor ck = ck_(*in.text_tokens), cv = cv_(*in.text_tokens);
  Tensor zc;
  if (kv && !self_site) {
    // The subject branch sees a query in the same positional frame as its keys.
    Tensor q_sub = rope_2d_apply(cq, cells, cfg_.rope_base, heads);
    auto r = inject_standard(cq, ck, cv, kv->k, kv->v, adapter_, heads, in.want_map, q_sub);
    zc = r.z;
    if (subject_map) *subject_map = r.subject_map;
  } else {
    zc = multihead_attention(cq, ck, cv, heads);
  }
  x = add(x, co_(zc));
  return mlp(img_, x, mod);
}

Tensor Block::mm_forward(const Tensor& x_in, Tensor* text, const BlockInputs& in, Tensor* subject_map) const {
  if (!text || !text->defined()) throw DimensionError("mm block needs the text stream");
  const int w = cfg_.width, heads = cfg_.heads;
  const auto n_txt = text->dim(1), n_img = x_in.dim(1);
  const Modulation mi = modulation(img_, *in.cond, w);
  const Modulation mt = modulation(txt_, *in.cond, w);
  Tensor hi = adaln_modulate(x_in, mi.shift1, mi.scale1);
  Tensor ht = adaln_modulate(*text, mt.shift1, mt.scale1);

  const auto joint = concat(GridCoords::origin(1, 1, static_cast<std::size_t>(n_txt)).cells(), in.coords->cells());
  Tensor q = rope_2d_apply(concat_tokens(txt_.q(ht), img_.q(hi)), joint, cfg_.rope_base, heads);
  Tensor k = rope_2d_apply(concat_tokens(txt_.k(ht), img_.k(hi)), joint, cfg_.rope_base, heads);
  Tensor v = concat_tokens(txt_.v(ht), img_.v(hi));

  Tensor z;
  if (in.subject) {
    SubjectKV kv = subject_kv(routed_feature(*in.subject, tap_, index_), tap_, in.subject->coords);
    auto r = inject_mm(q, k, v, kv.k, kv.v, adapter_, heads, in.want_map);
    z = r.z;
    if (subject_map && r.subject_map.defined()) {
      *subject_map = subject_block(r.subject_map, n_txt, n_img, kv.k.dim(1));
    }
  } else {
    z = multihead_attention(q, k, v, heads);
  }
  Tensor x = add(x_in, img_.o(slice_tokens(z, n_txt, n_img)));
  Tensor t = add(*text, txt_.o(slice_tokens(z, 0, n_txt)));
  *text = mlp(txt_, t, mt);
  return mlp(img_, x, mi);
}

Tensor timestep_embedding(const std::vector<int>& timesteps, int dim) {
  const int half = dim / 2;
  Tensor out = Tensor::zeros({std::int64_t(timesteps.size()), dim});
  auto d = out.mutable_data();
  for (std::size_t b = 0; b < timesteps.size(); ++b)
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      const double a = timesteps[b] * freq;
      d[b * static_cast<std::size_t>(dim) + static_cast<std::size_t>(i)] = static_cast<float>(std::cos(a));
      d[b * static_cast<std::size_t>(dim) + static_cast<std::size_t>(half + i)] = static_cast<float>(std::sin(a));
    }
  return out;
}

Backbone::Backbone(const ModelConfig& cfg, ParamStore& store, Rng& rng) : cfg_(cfg) {
  const int w = cfg.width;
  patch_in_ = make_linear(store, "base.patch_in", ParamGroup::Base, cfg.token_dim(), w, rng);
  t_fc1_ = make_linear(store, "base.t_fc1", ParamGroup::Base, w, w, rng);
  t_fc2_ = make_linear(store, "base.t_fc2", ParamGroup::Base, w, w, rng);
  text_cond_ = make_linear(store, "base.text_cond", ParamGroup::Base, cfg.text_dim, w, rng);
  text_tokens_ = make_linear(store, "base.text_tokens", ParamGroup::Base, cfg.text_dim, cfg.text_tokens * w, rng);
  final_mod_ = make_linear(store, "base.final_mod", ParamGroup::Base, w, 2 * w, rng);
  final_out_ = make_linear(store, "base.final_out", ParamGroup::Base, w, cfg.token_dim(), rng);
  const auto route = route_taps(cfg.num_blocks, cfg.num_taps);
  for (int b = 1; b <= cfg.num_blocks; ++b) blocks_.emplace_back(cfg, b, route[static_cast<std::size_t>(b - 1)], store, rng);
}

Tensor Backbone::forward(const Tensor& x_t, const std::vector<int>& timesteps, const Tensor& text,
                         const SubjectFeature* subject, ForwardTrace* trace) const {
  const int p = cfg_.patch_size, w = cfg_.width;
  if (x_t.rank() != 4 || x_t.dim(1) != cfg_.latent_channels || x_t.dim(2) % p || x_t.dim(3) % p) {
    throw DimensionError("backbone: latent " + shape_to_string(x_t.shape()) + " does not fit " +
                         std::to_string(cfg_.latent_channels) + " channels and patch " + std::to_string(p));
  }
  const auto batch = x_t.dim(0);
  if (std::int64_t(timesteps.size()) != batch) throw DimensionError("backbone: one timestep per batch row required");
  if (text.rank() != 2 || text.dim(0) != batch || text.dim(1) != cfg_.text_dim) {
    throw DimensionError("backbone: text condition " + shape_to_string(text.shape()) + " must be [B, " +
                         std::to_string(cfg_.text_dim) + "]");
  }
  const int rows = int(x_t.dim(2)) / p, cols = int(x_t.dim(3)) / p;
  const GridCoords coords = GridCoords::raster(rows, cols);
  if (subject) {
    if (subject->coords.size() != coords.size() || subject->taps.empty() || subject->taps[0].dim(0) != batch) {
      throw DimensionError("backbone: subject feature grid or batch does not match the latent");
    }
  }

  Tensor x = patch_in_(patchify(x_t, p));
  Tensor cond = add(t_fc2_(silu(t_fc1_(timestep_embedding(timesteps, w)))), text_cond_(text));
  Tensor text_tok = reshape(text_tokens_(text), {batch, cfg_.text_tokens, w});

  BlockInputs in;
  in.text_tokens = &text_tok;
  in.cond = &cond;
  in.coords = &coords;
  in.subject = subject;
  in.want_map = trace != nullptr;
  if (trace) trace->subject_maps.assign(blocks_.size(), Tensor());

  std::vector<Tensor> stored(blocks_.size() + 1);
  Tensor text_stream = text_tok;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& blk = blocks_[i];
    if (blk.skip_source() > 0) {
      std::vector<Tensor> parts{x, stored[static_cast<std::size_t>(blk.skip_source())]};
      x = blk.skip_proj()(concat_last(parts));
    }
    Tensor* map = trace ? &trace->subject_maps[i] : nullptr;
    x = blk.forward(x, &text_stream, in, map);
    if (cfg_.flavor == Flavor::Standard && blk.index() <= cfg_.num_blocks / 2) stored[static_cast<std::size_t>(blk.index())] = x;
  }

  Tensor fm = final_mod_(silu(cond));
  Tensor out = final_out_(adaln_modulate(x, slice_last(fm, 0, w), slice_last(fm, w, w)));
  return unpatchify(out, cfg_.latent_channels, x_t.dim(2), x_t.dim(3), p);
}

}  // namespace fgp
