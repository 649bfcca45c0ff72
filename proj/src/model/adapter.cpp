// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fgpaint/adapter.hpp"

#include <cmath>

#include "fgpaint/errors.hpp"
#include "fgpaint/ops.hpp"

namespace fgp {

AdapterParams make_adapter(ParamStore& store, const std::string& name, std::int64_t adapter_width,
                           std::int64_t width, float alpha, float beta, Rng& rng) {
  AdapterParams p;
  p.pre_proj = make_linear(store, name + ".pre_proj", ParamGroup::Adapter, adapter_width, width, rng);
  const float a = static_cast<float>(std::sqrt(6.0 / double(2 * width)));
  p.w_k = store.add(name + ".w_k", ParamGroup::Adapter, rand_uniform({width, width}, rng, -a, a));
  p.w_v = store.add(name + ".w_v", ParamGroup::Adapter, rand_uniform({width, width}, rng, -a, a));
  p.gate = store.add(name + ".gate", ParamGroup::Adapter, Tensor::zeros({1}));
  p.alpha = alpha;
  p.beta = beta;
  return p;
}

SubjectKV project_subject(const Tensor& feature, const AdapterParams& p) {
  if (feature.rank() < 2 || feature.dim(-1) != p.pre_proj.in()) {
    throw DimensionError("project_subject: feature " + shape_to_string(feature.shape()) +
                         " does not match adapter input width " + std::to_string(p.pre_proj.in()));
  }
  Tensor h = p.pre_proj(feature);
  return {matmul(h, p.w_k), matmul(h, p.w_v)};
}

Tensor anchor_positions(const Tensor& k_pre, std::span<const GridCoord> coords, double base, int heads) {
  return rope_2d_apply(k_pre, coords, base, heads);
}

namespace {

Tensor strength(const AdapterParams& p) { return mul_const(tanh(p.gate), p.beta); }

void check_heads(const Tensor& q, const Tensor& k_sub, const char* op) {
  if (q.rank() != 3 || k_sub.rank() != 3 || q.dim(-1) != k_sub.dim(-1) || q.dim(0) != k_sub.dim(0)) {
    throw DimensionError(std::string(op) + ": query " + shape_to_string(q.shape()) + " and subject keys " +
                         shape_to_string(k_sub.shape()) + " disagree on batch or head width");
  }
}

}  // namespace

InjectResult inject_standard(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& k_sub,
                             const Tensor& v_sub, const AdapterParams& p, int heads, bool want_map,
                             const Tensor& q_sub) {
  const Tensor& qs = q_sub.defined() ? q_sub : q;
  check_heads(q, k_sub, "inject_standard");
  if (qs.shape() != q.shape()) throw DimensionError("inject_standard: subject query shape differs from query");
  InjectResult r;
  Tensor self = multihead_attention(q, k, v, heads);
  Tensor cross = multihead_attention(qs, k_sub, v_sub, heads, want_map ? &r.subject_map : nullptr);
  r.z = blend(self, p.alpha, cross, strength(p));
  return r;
}

InjectResult inject_mm(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& k_sub, const Tensor& v_sub,
                       const AdapterParams& p, int heads, bool want_map) {
  check_heads(q, k_sub, "inject_mm");
  if (k_sub.shape() != v_sub.shape()) throw DimensionError("inject_mm: subject keys and values differ in shape");
  InjectResult r;
  Tensor first = multihead_attention(q, k, v, heads);
  Tensor second = multihead_attention(q, concat_tokens(k, k_sub), concat_tokens(v, v_sub), heads,
                                      want_map ? &r.subject_map : nullptr);
  r.z = blend(first, p.alpha, second, strength(p));
  return r;
}

}  // namespace fgp
