// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <utility>
#include <vector>

#include "fgpaint/tensor.hpp"

namespace fgp {

// Differentiable primitives. Every op validates shapes and throws
// DimensionError on mismatch; when a tape is active and any input requires
// gradients the op records its backward closure.

// Last-dim contraction: a is [..., k], b is [k, m]; result is [..., m].
Tensor matmul(const Tensor& a, const Tensor& b);
// x·w + bias with w stored [in, out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor transpose2d(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul_const(const Tensor& x, float c);
// x scaled by a one-element tensor s (used for gates).
Tensor scale_by(const Tensor& x, const Tensor& s);
// alpha·a + s·b in one pass; s is a one-element tensor. With s == 0 the
// result equals alpha·a bit-for-bit.
Tensor blend(const Tensor& a, float alpha, const Tensor& b, const Tensor& s);

Tensor tanh(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor silu(const Tensor& x);

Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, float eps = 1e-5f);
// out = x·(1 + scale) + shift. x is [B, ..., D]; shift and scale are [D]
// (shared by all rows) or [B, D] (one row per leading batch index).
Tensor modulate(const Tensor& x, const Tensor& shift, const Tensor& scale);
// layer_norm(x)·(1 + scale) + shift.
Tensor adaln_modulate(const Tensor& x, const Tensor& shift, const Tensor& scale);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_last(std::span<const Tensor> parts);
Tensor slice_last(const Tensor& x, std::int64_t offset, std::int64_t length);
// Token-axis concat: axis 1 for [B, N, D], axis 0 for [N, D]. Either side
// may hold zero tokens.
Tensor concat_tokens(const Tensor& a, const Tensor& b);
Tensor slice_tokens(const Tensor& x, std::int64_t offset, std::int64_t length);

// [B, C, H, W] -> [B, (H/p)(W/p), C·p·p], feature order (c, dy, dx).
Tensor patchify(const Tensor& x, int patch);
Tensor unpatchify(const Tensor& tokens, std::int64_t channels, std::int64_t height,
                  std::int64_t width, int patch);

// x [B, Ci, H, W], w [Co, Ci, k, k], bias [Co] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);
Tensor upsample_nearest(const Tensor& x, int factor);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);
// Σ x ⊙ weights with double accumulation; weights are constant.
Tensor weighted_sum(const Tensor& x, const Tensor& weights);

struct AttentionResult {
  Tensor output;
  Tensor map;
};

// softmax(Q·Kᵀ/√d)·V for single-head [n, d] operands, built from
// matmul/softmax_rows so that both output and map are differentiable.
AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

// Fused multi-head attention over [B, N, D] operands (D split into `heads`).
// When `map_out` is non-null it receives the non-differentiable attention
// probabilities as [B, heads, Nq, Nk].
Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                           Tensor* map_out = nullptr);

}  // namespace fgp
