// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include <Eigen/Core>
#include <cmath>

#include "fgpaint/errors.hpp"
#include "fgpaint/ops.hpp"
#include "fgpaint/tape.hpp"

namespace fgp {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ImplPtr = std::shared_ptr<detail::TensorImpl>;

// Copies head `h` of batch `b` out of a [B, N, D] buffer into a dense [N, dh].
void gather_head(const float* src, std::int64_t b, std::int64_t n, std::int64_t d, std::int64_t h,
                 std::int64_t dh, RowMat& dst) {
  dst.resize(n, dh);
  for (std::int64_t t = 0; t < n; ++t) {
    const float* row = src + (b * n + t) * d + h * dh;
    for (std::int64_t c = 0; c < dh; ++c) dst(t, c) = row[c];
  }
}

void scatter_head_add(float* dst, std::int64_t b, std::int64_t n, std::int64_t d, std::int64_t h,
                      std::int64_t dh, const RowMat& src) {
  for (std::int64_t t = 0; t < n; ++t) {
    float* row = dst + (b * n + t) * d + h * dh;
    for (std::int64_t c = 0; c < dh; ++c) row[c] += src(t, c);
  }
}

}  // namespace

Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads, Tensor* map_out) {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3) {
    throw DimensionError("multihead_attention: expects [B, N, D] operands, got " + shape_to_string(q.shape()) +
                         ", " + shape_to_string(k.shape()) + ", " + shape_to_string(v.shape()));
  }
  const auto b = q.dim(0), nq = q.dim(1), d = q.dim(2), nk = k.dim(1);
  if (k.dim(0) != b || v.dim(0) != b || k.dim(2) != d || v.dim(2) != d || v.dim(1) != nk) {
    throw DimensionError("multihead_attention: mismatched Q " + shape_to_string(q.shape()) + ", K " +
                         shape_to_string(k.shape()) + ", V " + shape_to_string(v.shape()));
  }
  if (heads <= 0 || d % heads != 0) {
    throw DimensionError("multihead_attention: width " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  if (nk == 0) throw DimensionError("multihead_attention: no keys");
  if (!all_finite(q.data()) || !all_finite(k.data()) || !all_finite(v.data())) {
    throw NumericError("multihead_attention: non-finite input");
  }
  const auto dh = d / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  Tensor out = Tensor::zeros({b, nq, d});
  // Probabilities per (batch, head), kept for backward and diagnostics.
  auto probs = std::make_shared<std::vector<RowMat>>(static_cast<std::size_t>(b * heads));
  RowMat qh, kh, vh, oh;
  for (std::int64_t bi = 0; bi < b; ++bi) {
    for (std::int64_t h = 0; h < heads; ++h) {
      gather_head(q.data().data(), bi, nq, d, h, dh, qh);
      gather_head(k.data().data(), bi, nk, d, h, dh, kh);
      gather_head(v.data().data(), bi, nk, d, h, dh, vh);
      RowMat& p = (*probs)[static_cast<std::size_t>(bi * heads + h)];
      p.noalias() = (qh * kh.transpose()) * scale;
      for (std::int64_t r = 0; r < nq; ++r) {
        const float mx = p.row(r).maxCoeff();
        double total = 0.0;
        for (std::int64_t c = 0; c < nk; ++c) {
          p(r, c) = std::exp(p(r, c) - mx);
          total += p(r, c);
        }
        p.row(r) *= static_cast<float>(1.0 / total);
      }
      oh.noalias() = p * vh;
      scatter_head_add(out.mutable_data().data(), bi, nq, d, h, dh, oh);
    }
  }
  if (map_out) {
    Tensor m = Tensor::zeros({b, heads, nq, nk});
    auto dst = m.mutable_data();
    for (std::int64_t i = 0; i < b * heads; ++i) {
      const RowMat& p = (*probs)[static_cast<std::size_t>(i)];
      std::copy_n(p.data(), nq * nk, dst.data() + i * nq * nk);
    }
    *map_out = std::move(m);
  }
  if (should_record(q, k, v)) {
    out.impl()->requires_grad = true;
    ImplPtr o = out.impl(), pq = q.impl(), pk = k.impl(), pv = v.impl();
    Tape::active()->record([o, pq, pk, pv, probs, b, nq, nk, d, heads, dh, scale] {
      if (o->grad.size() != o->data.size()) return;
      float* gq = pq->requires_grad ? pq->grad_buffer().data() : nullptr;
      float* gk = pk->requires_grad ? pk->grad_buffer().data() : nullptr;
      float* gv = pv->requires_grad ? pv->grad_buffer().data() : nullptr;
      RowMat qh2, kh2, vh2, go, dp, ds, tmp;
      for (std::int64_t bi = 0; bi < b; ++bi) {
        for (std::int64_t h = 0; h < heads; ++h) {
          const RowMat& p = (*probs)[static_cast<std::size_t>(bi * heads + h)];
          gather_head(o->grad.data(), bi, nq, d, h, dh, go);
          gather_head(pv->data.data(), bi, nk, d, h, dh, vh2);
          if (gv) {
            tmp.noalias() = p.transpose() * go;
            scatter_head_add(gv, bi, nk, d, h, dh, tmp);
          }
          if (!gq && !gk) continue;
          dp.noalias() = go * vh2.transpose();
          ds.resize(nq, nk);
          for (std::int64_t r = 0; r < nq; ++r) {
            const float dot = (dp.row(r).array() * p.row(r).array()).sum();
            ds.row(r) = p.row(r).array() * (dp.row(r).array() - dot);
          }
          ds *= scale;
          if (gq) {
            gather_head(pk->data.data(), bi, nk, d, h, dh, kh2);
            tmp.noalias() = ds * kh2;
            scatter_head_add(gq, bi, nq, d, h, dh, tmp);
          }
          if (gk) {
            gather_head(pq->data.data(), bi, nq, d, h, dh, qh2);
            tmp.noalias() = ds.transpose() * qh2;
            scatter_head_add(gk, bi, nk, d, h, dh, tmp);
          }
        }
      }
    });
  }
  return out;
}

}  // namespace fgp
