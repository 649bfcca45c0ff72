// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "fgpaint/nn.hpp"
#include "fgpaint/rope.hpp"
#include "fgpaint/tensor.hpp"

namespace fgp {

/// Per-block subject projection and gated injection strength.
struct AdapterParams {
  Linear pre_proj;  // adapter width -> block width
  Tensor w_k;       // [width, width]
  Tensor w_v;       // [width, width]
  Tensor gate;      // [1], zero at init
  float alpha = 1.0f;
  float beta = 1.0f;
};

AdapterParams make_adapter(ParamStore& store, const std::string& name, std::int64_t adapter_width,
                           std::int64_t width, float alpha, float beta, Rng& rng);

struct SubjectKV {
  Tensor k;  // [B, N, width]
  Tensor v;  // [B, N, width]
};

// K_pre = pre_proj(F)·W_k, V = pre_proj(F)·W_v.
SubjectKV project_subject(const Tensor& feature, const AdapterParams& p);
// Rotates subject keys by their own grid cells; values stay unrotated.
Tensor anchor_positions(const Tensor& k_pre, std::span<const GridCoord> coords, double base, int heads);

struct InjectResult {
  Tensor z;
  // Subject-branch attention probabilities [B, heads, Nq, Nk_branch]; only
  // filled when requested.
  Tensor subject_map;
};

// α·Attn(Q, K, V) + tanh(gate)·β·Attn(Q_sub, K_sub, V_sub). Q_sub defaults
// to Q; the cross-attention placement passes a separately rotated query.
InjectResult inject_standard(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& k_sub,
                             const Tensor& v_sub, const AdapterParams& p, int heads, bool want_map = false,
                             const Tensor& q_sub = Tensor());

// α·Attn(Q, K, V) + tanh(gate)·β·Attn(Q, [K; K_sub], [V; V_sub]) over the
// joint text+latent sequence. subject_map covers all keys of the second
// term; the subject columns are the last K_sub tokens.
InjectResult inject_mm(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& k_sub, const Tensor& v_sub,
                       const AdapterParams& p, int heads, bool want_map = false);

}  // namespace fgp
