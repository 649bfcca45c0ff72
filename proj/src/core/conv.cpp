// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include <Eigen/Core>

#include "fgpaint/errors.hpp"
#include "fgpaint/ops.hpp"
#include "fgpaint/tape.hpp"

namespace fgp {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using ImplPtr = std::shared_ptr<detail::TensorImpl>;

struct ConvGeom {
  std::int64_t ci, h, w, k, stride, pad, ho, wo;
};

// cols is [ci·k·k, ho·wo]; zero padding.
void im2col(const float* img, const ConvGeom& g, float* cols) {
  const auto npix = g.ho * g.wo;
  for (std::int64_t c = 0; c < g.ci; ++c)
    for (std::int64_t ky = 0; ky < g.k; ++ky)
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        float* row = cols + ((c * g.k + ky) * g.k + kx) * npix;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = oy * g.stride - g.pad + ky;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = ox * g.stride - g.pad + kx;
            row[oy * g.wo + ox] =
                (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) ? img[(c * g.h + iy) * g.w + ix] : 0.0f;
          }
        }
      }
}

void col2im_add(const float* cols, const ConvGeom& g, float* img) {
  const auto npix = g.ho * g.wo;
  for (std::int64_t c = 0; c < g.ci; ++c)
    for (std::int64_t ky = 0; ky < g.k; ++ky)
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        const float* row = cols + ((c * g.k + ky) * g.k + kx) * npix;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) img[(c * g.h + iy) * g.w + ix] += row[oy * g.wo + ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  if (x.rank() != 4 || w.rank() != 4) {
    throw DimensionError("conv2d: expects x [B, C, H, W] and w [Co, Ci, k, k], got " + shape_to_string(x.shape()) +
                         " and " + shape_to_string(w.shape()));
  }
  if (w.dim(1) != x.dim(1)) {
    throw DimensionError("conv2d: input has " + std::to_string(x.dim(1)) + " channels, kernel expects " +
                         std::to_string(w.dim(1)));
  }
  if (w.dim(2) != w.dim(3) || stride <= 0 || pad < 0) throw DimensionError("conv2d: unsupported kernel geometry");
  const auto co = w.dim(0);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != co)) throw DimensionError("conv2d: bias width mismatch");
  ConvGeom g{x.dim(1), x.dim(2), x.dim(3), w.dim(2), stride, pad, 0, 0};
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;
  if (g.ho <= 0 || g.wo <= 0) throw DimensionError("conv2d: kernel larger than padded input");
  const auto b = x.dim(0);
  const auto kk = g.ci * g.k * g.k, npix = g.ho * g.wo;
  Tensor out = Tensor::zeros({b, co, g.ho, g.wo});
  auto cols = std::make_shared<FloatBuffer>(static_cast<std::size_t>(b * kk * npix));
  ConstMapMat wm(w.data().data(), co, kk);
  for (std::int64_t bi = 0; bi < b; ++bi) {
    float* c = cols->data() + bi * kk * npix;
    im2col(x.data().data() + bi * g.ci * g.h * g.w, g, c);
    MapMat om(out.mutable_data().data() + bi * co * npix, co, npix);
    om.noalias() = wm * ConstMapMat(c, kk, npix);
    if (bias.defined()) {
      for (std::int64_t oc = 0; oc < co; ++oc) om.row(oc).array() += bias.data()[static_cast<std::size_t>(oc)];
    }
  }
  const bool rec = bias.defined() ? should_record(x, w, bias) : should_record(x, w);
  if (rec) {
    out.impl()->requires_grad = true;
    ImplPtr o = out.impl(), px = x.impl(), pw = w.impl();
    ImplPtr pb = bias.defined() ? bias.impl() : nullptr;
    Tape::active()->record([o, px, pw, pb, cols, g, b, co, kk, npix] {
      if (o->grad.size() != o->data.size()) return;
      ConstMapMat wmat(pw->data.data(), co, kk);
      RowMat dcols;
      for (std::int64_t bi = 0; bi < b; ++bi) {
        ConstMapMat go(o->grad.data() + bi * co * npix, co, npix);
        if (pw->requires_grad) {
          MapMat gw(pw->grad_buffer().data(), co, kk);
          gw.noalias() += go * ConstMapMat(cols->data() + bi * kk * npix, kk, npix).transpose();
        }
        if (pb && pb->requires_grad) {
          auto gb = pb->grad_buffer();
          for (std::int64_t oc = 0; oc < co; ++oc) gb[static_cast<std::size_t>(oc)] += go.row(oc).sum();
        }
        if (px->requires_grad) {
          dcols.noalias() = wmat.transpose() * go;
          col2im_add(dcols.data(), g, px->grad_buffer().data() + bi * g.ci * g.h * g.w);
        }
      }
    });
  }
  return out;
}

}  // namespace fgp
