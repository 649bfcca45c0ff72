// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fgpaint/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <numeric>

#include "fgpaint/errors.hpp"
#include "fgpaint/tape.hpp"

namespace fgp {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using ImplPtr = std::shared_ptr<detail::TensorImpl>;

std::size_t sz(std::int64_t v) { return static_cast<std::size_t>(v); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw DimensionError(std::string(op) + ": undefined input");
}

// Marks `out` as produced by a recorded op and registers the closure.
void record(Tensor& out, std::function<void()> fn) {
  out.impl()->requires_grad = true;
  Tape::active()->record(std::move(fn));
}

bool has_incoming(const ImplPtr& o) { return o->grad.size() == o->data.size() && !o->data.empty(); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (b.rank() != 2 || a.rank() < 1 || a.dim(-1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
  }
  const auto k = b.dim(0);
  const auto m = b.dim(1);
  const auto rows = k == 0 ? 0 : a.numel() / k;
  Shape out_shape = a.shape();
  out_shape.back() = m;
  Tensor out = Tensor::zeros(out_shape);
  if (rows > 0 && k > 0) {
    ConstMapMat am(a.data().data(), rows, k);
    ConstMapMat bm(b.data().data(), k, m);
    MapMat om(out.mutable_data().data(), rows, m);
    om.noalias() = am * bm;
  }
  if (should_record(a, b)) {
    ImplPtr o = out.impl(), pa = a.impl(), pb = b.impl();
    record(out, [o, pa, pb, rows, k, m] {
      if (!has_incoming(o) || rows == 0 || k == 0) return;
      ConstMapMat go(o->grad.data(), rows, m);
      if (pa->requires_grad) {
        MapMat ga(pa->grad_buffer().data(), rows, k);
        ga.noalias() += go * ConstMapMat(pb->data.data(), k, m).transpose();
      }
      if (pb->requires_grad) {
        MapMat gb(pb->grad_buffer().data(), k, m);
        gb.noalias() += ConstMapMat(pa->data.data(), rows, k).transpose() * go;
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  Tensor y = matmul(x, w);
  if (!bias.defined()) return y;
  if (bias.rank() != 1 || bias.dim(0) != w.dim(1)) {
    throw DimensionError("linear: bias shape " + shape_to_string(bias.shape()) +
                         " does not match weight " + shape_to_string(w.shape()));
  }
  return modulate(y, bias, Tensor());
}

Tensor transpose2d(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose2d: expects rank 2, got " + shape_to_string(a.shape()));
  const auto r = a.dim(0), c = a.dim(1);
  Tensor out = Tensor::zeros({c, r});
  auto src = a.data();
  auto dst = out.mutable_data();
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) dst[sz(j * r + i)] = src[sz(i * c + j)];
  if (should_record(a)) {
    ImplPtr o = out.impl(), pa = a.impl();
    record(out, [o, pa, r, c] {
      if (!has_incoming(o) || !pa->requires_grad) return;
      auto ga = pa->grad_buffer();
      for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) ga[sz(i * c + j)] += o->grad[sz(j * r + i)];
    });
  }
  return out;
}

namespace {

// Shared implementation of a + sign·b.
Tensor add_signed(const Tensor& a, const Tensor& b, float sign, const char* name) {
  require_same_shape(a, b, name);
  Tensor out = Tensor::zeros(a.shape());
  auto da = a.data(), db = b.data();
  auto d = out.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = da[i] + sign * db[i];
  if (should_record(a, b)) {
    ImplPtr o = out.impl(), pa = a.impl(), pb = b.impl();
    record(out, [o, pa, pb, sign] {
      if (!has_incoming(o)) return;
      if (pa->requires_grad) {
        auto g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
      if (pb->requires_grad) {
        auto g = pb->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * o->grad[i];
      }
    });
  }
  return out;
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  require_defined(x, "unary");
  Tensor out = Tensor::zeros(x.shape());
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = fwd(src[i]);
  if (should_record(x)) {
    ImplPtr o = out.impl(), px = x.impl();
    record(out, [o, px, deriv] {
      if (!has_incoming(o) || !px->requires_grad) return;
      auto g = px->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * deriv(px->data[i], o->data[i]);
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_signed(a, b, 1.0f, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_signed(a, b, -1.0f, "sub"); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  auto da = a.data(), db = b.data();
  auto d = out.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = da[i] * db[i];
  if (should_record(a, b)) {
    ImplPtr o = out.impl(), pa = a.impl(), pb = b.impl();
    record(out, [o, pa, pb] {
      if (!has_incoming(o)) return;
      if (pa->requires_grad) {
        auto g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * pb->data[i];
      }
      if (pb->requires_grad) {
        auto g = pb->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * pa->data[i];
      }
    });
  }
  return out;
}

Tensor mul_const(const Tensor& x, float c) {
  return unary(x, [c](float v) { return v * c; }, [c](float, float) { return c; });
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) throw DimensionError("scale_by: scale must hold one element, got " + shape_to_string(s.shape()));
  Tensor out = Tensor::zeros(x.shape());
  const float sv = s.item();
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] * sv;
  if (should_record(x, s)) {
    ImplPtr o = out.impl(), px = x.impl(), ps = s.impl();
    record(out, [o, px, ps] {
      if (!has_incoming(o)) return;
      const float svv = ps->data[0];
      if (px->requires_grad) {
        auto g = px->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * svv;
      }
      if (ps->requires_grad) {
        double acc = 0.0;
        for (std::size_t i = 0; i < o->grad.size(); ++i) acc += double(o->grad[i]) * px->data[i];
        ps->grad_buffer()[0] += static_cast<float>(acc);
      }
    });
  }
  return out;
}

Tensor blend(const Tensor& a, float alpha, const Tensor& b, const Tensor& s) {
  require_same_shape(a, b, "blend");
  if (s.numel() != 1) throw DimensionError("blend: strength must hold one element");
  Tensor out = Tensor::zeros(a.shape());
  const float sv = s.item();
  auto da = a.data(), db = b.data();
  auto d = out.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = alpha * da[i] + sv * db[i];
  if (should_record(a, b, s)) {
    ImplPtr o = out.impl(), pa = a.impl(), pb = b.impl(), ps = s.impl();
    record(out, [o, pa, pb, ps, alpha] {
      if (!has_incoming(o)) return;
      const float svv = ps->data[0];
      if (pa->requires_grad) {
        auto g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += alpha * o->grad[i];
      }
      if (pb->requires_grad) {
        auto g = pb->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += svv * o->grad[i];
      }
      if (ps->requires_grad) {
        double acc = 0.0;
        for (std::size_t i = 0; i < o->grad.size(); ++i) acc += double(o->grad[i]) * pb->data[i];
        ps->grad_buffer()[0] += static_cast<float>(acc);
      }
    });
  }
  return out;
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](float v) { return std::tanh(v); }, [](float, float y) { return 1.0f - y * y; });
}

namespace {
constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)
}

Tensor gelu(const Tensor& x) {
  return unary(
      x,
      [](float v) { return 0.5f * v * (1.0f + std::tanh(kGeluC * (v + 0.044715f * v * v * v))); },
      [](float v, float) {
        const float inner = kGeluC * (v + 0.044715f * v * v * v);
        const float t = std::tanh(inner);
        const float dinner = kGeluC * (1.0f + 3.0f * 0.044715f * v * v);
        return 0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * dinner;
      });
}

Tensor silu(const Tensor& x) {
  return unary(
      x, [](float v) { return v / (1.0f + std::exp(-v)); },
      [](float v, float) {
        const float s = 1.0f / (1.0f + std::exp(-v));
        return s * (1.0f + v * (1.0f - s));
      });
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() < 1) throw DimensionError("softmax_rows: rank 0 input");
  const auto cols = x.dim(-1);
  if (cols == 0) throw DimensionError("softmax_rows: empty rows");
  const auto rows = x.numel() / cols;
  if (!all_finite(x.data())) throw NumericError("softmax_rows: non-finite input");
  Tensor out = Tensor::zeros(x.shape());
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* in = src.data() + r * cols;
    float* o = dst.data() + r * cols;
    float mx = in[0];
    for (std::int64_t c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    double total = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    const float inv = static_cast<float>(1.0 / total);
    for (std::int64_t c = 0; c < cols; ++c) o[c] *= inv;
  }
  if (should_record(x)) {
    ImplPtr o = out.impl(), px = x.impl();
    record(out, [o, px, rows, cols] {
      if (!has_incoming(o) || !px->requires_grad) return;
      auto g = px->grad_buffer();
      for (std::int64_t r = 0; r < rows; ++r) {
        const float* p = o->data.data() + r * cols;
        const float* gy = o->grad.data() + r * cols;
        double dot = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) dot += double(p[c]) * gy[c];
        for (std::int64_t c = 0; c < cols; ++c)
          g[sz(r * cols + c)] += p[c] * (gy[c] - static_cast<float>(dot));
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, float eps) {
  if (x.rank() < 1) throw DimensionError("layer_norm: rank 0 input");
  const auto cols = x.dim(-1);
  if (cols == 0) throw DimensionError("layer_norm: empty rows");
  const auto rows = x.numel() / cols;
  Tensor out = Tensor::zeros(x.shape());
  std::vector<float> inv_std(sz(rows));
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* in = src.data() + r * cols;
    double mu = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) mu += in[c];
    mu /= double(cols);
    double var = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= double(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[sz(r)] = static_cast<float>(is);
    for (std::int64_t c = 0; c < cols; ++c) dst[sz(r * cols + c)] = static_cast<float>((in[c] - mu) * is);
  }
  if (should_record(x)) {
    ImplPtr o = out.impl(), px = x.impl();
    record(out, [o, px, rows, cols, inv_std = std::move(inv_std)] {
      if (!has_incoming(o) || !px->requires_grad) return;
      auto g = px->grad_buffer();
      for (std::int64_t r = 0; r < rows; ++r) {
        const float* xh = o->data.data() + r * cols;
        const float* gy = o->grad.data() + r * cols;
        double mg = 0.0, mgx = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) {
          mg += gy[c];
          mgx += double(gy[c]) * xh[c];
        }
        mg /= double(cols);
        mgx /= double(cols);
        const float is = inv_std[sz(r)];
        for (std::int64_t c = 0; c < cols; ++c)
          g[sz(r * cols + c)] += is * static_cast<float>(gy[c] - mg - xh[c] * mgx);
      }
    });
  }
  return out;
}

Tensor modulate(const Tensor& x, const Tensor& shift, const Tensor& scale) {
  require_defined(x, "modulate");
  if (x.rank() < 1) throw DimensionError("modulate: rank 0 input");
  const auto cols = x.dim(-1);
  const Tensor& ref = shift.defined() ? shift : scale;
  if (!ref.defined()) return x;
  if (shift.defined() && scale.defined() && shift.shape() != scale.shape()) {
    throw DimensionError("modulate: shift " + shape_to_string(shift.shape()) + " and scale " +
                         shape_to_string(scale.shape()) + " differ");
  }
  std::int64_t groups = 1;
  if (ref.rank() == 1) {
    if (ref.dim(0) != cols) {
      throw DimensionError("modulate: width " + std::to_string(ref.dim(0)) + " does not match input width " +
                           std::to_string(cols));
    }
  } else if (ref.rank() == 2) {
    if (ref.dim(1) != cols || x.rank() < 2 || ref.dim(0) != x.dim(0)) {
      throw DimensionError("modulate: per-batch modulation " + shape_to_string(ref.shape()) +
                           " incompatible with input " + shape_to_string(x.shape()));
    }
    groups = ref.dim(0);
  } else {
    throw DimensionError("modulate: modulation must be rank 1 or 2");
  }
  const auto rows = cols == 0 ? 0 : x.numel() / cols;
  const auto rows_per_group = groups == 0 ? 0 : rows / groups;
  Tensor out = Tensor::zeros(x.shape());
  auto src = x.data();
  auto dst = out.mutable_data();
  const float* sh = shift.defined() ? shift.data().data() : nullptr;
  const float* sc = scale.defined() ? scale.data().data() : nullptr;
  for (std::int64_t r = 0; r < rows; ++r) {
    const auto gidx = r / rows_per_group;
    for (std::int64_t c = 0; c < cols; ++c) {
      const auto i = sz(r * cols + c);
      const auto m = sz(gidx * cols + c);
      float v = src[i];
      if (sc) v = v * (1.0f + sc[m]);
      if (sh) v = v + sh[m];
      dst[i] = v;
    }
  }
  const bool rec = shift.defined() && scale.defined() ? should_record(x, shift, scale)
                   : shift.defined()                  ? should_record(x, shift)
                                                      : should_record(x, scale);
  if (rec) {
    ImplPtr o = out.impl(), px = x.impl();
    ImplPtr psh = shift.defined() ? shift.impl() : nullptr;
    ImplPtr psc = scale.defined() ? scale.impl() : nullptr;
    record(out, [o, px, psh, psc, rows, cols, rows_per_group] {
      if (!has_incoming(o)) return;
      std::span<float> gx = px->requires_grad ? px->grad_buffer() : std::span<float>();
      std::span<float> gsh = psh && psh->requires_grad ? psh->grad_buffer() : std::span<float>();
      std::span<float> gsc = psc && psc->requires_grad ? psc->grad_buffer() : std::span<float>();
      for (std::int64_t r = 0; r < rows; ++r) {
        const auto gidx = r / rows_per_group;
        for (std::int64_t c = 0; c < cols; ++c) {
          const auto i = sz(r * cols + c);
          const auto m = sz(gidx * cols + c);
          const float gy = o->grad[i];
          if (!gx.empty()) gx[i] += psc ? gy * (1.0f + psc->data[m]) : gy;
          if (!gsh.empty()) gsh[m] += gy;
          if (!gsc.empty()) gsc[m] += gy * px->data[i];
        }
      }
    });
  }
  return out;
}

Tensor adaln_modulate(const Tensor& x, const Tensor& shift, const Tensor& scale) {
  if (!shift.defined() || !scale.defined()) throw DimensionError("adaln_modulate: shift and scale required");
  if (shift.dim(-1) != x.dim(-1) || scale.dim(-1) != x.dim(-1)) {
    throw DimensionError("adaln_modulate: modulation width " + std::to_string(shift.dim(-1)) +
                         " does not match input width " + std::to_string(x.dim(-1)));
  }
  return modulate(layer_norm(x), shift, scale);
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_to_string(x.shape()) + " -> " + shape_to_string(shape));
  }
  Tensor out = Tensor::from_buffer(std::move(shape), FloatBuffer(x.data().begin(), x.data().end()));
  if (should_record(x)) {
    ImplPtr o = out.impl(), px = x.impl();
    record(out, [o, px] {
      if (!has_incoming(o) || !px->requires_grad) return;
      auto g = px->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
    });
  }
  return out;
}

Tensor concat_last(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_last: no inputs");
  Shape lead = parts[0].shape();
  if (lead.empty()) throw DimensionError("concat_last: rank 0 input");
  lead.pop_back();
  std::vector<std::int64_t> widths;
  std::int64_t total = 0;
  bool rec = false;
  for (const auto& p : parts) {
    Shape l = p.shape();
    if (l.empty()) throw DimensionError("concat_last: rank 0 input");
    const auto w = l.back();
    l.pop_back();
    if (l != lead) {
      throw DimensionError("concat_last: leading dims differ " + shape_to_string(parts[0].shape()) + " vs " +
                           shape_to_string(p.shape()));
    }
    widths.push_back(w);
    total += w;
    rec = rec || should_record(p);
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor out = Tensor::zeros(out_shape);
  const auto rows = shape_numel(lead);
  auto dst = out.mutable_data();
  std::int64_t off = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    auto src = parts[pi].data();
    const auto w = widths[pi];
    for (std::int64_t r = 0; r < rows; ++r)
      std::copy_n(src.data() + r * w, w, dst.data() + r * total + off);
    off += w;
  }
  if (rec) {
    ImplPtr o = out.impl();
    std::vector<ImplPtr> ins;
    for (const auto& p : parts) ins.push_back(p.impl());
    record(out, [o, ins, widths, rows, total] {
      if (!has_incoming(o)) return;
      std::int64_t offset = 0;
      for (std::size_t pi = 0; pi < ins.size(); ++pi) {
        const auto w = widths[pi];
        if (ins[pi]->requires_grad) {
          auto g = ins[pi]->grad_buffer();
          for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < w; ++c) g[sz(r * w + c)] += o->grad[sz(r * total + offset + c)];
        }
        offset += w;
      }
    });
  }
  return out;
}

Tensor slice_last(const Tensor& x, std::int64_t offset, std::int64_t length) {
  const auto cols = x.dim(-1);
  if (offset < 0 || length < 0 || offset + length > cols) {
    throw DimensionError("slice_last: [" + std::to_string(offset) + ", +" + std::to_string(length) +
                         ") out of range for " + shape_to_string(x.shape()));
  }
  const auto rows = cols == 0 ? 0 : x.numel() / cols;
  Shape out_shape = x.shape();
  out_shape.back() = length;
  Tensor out = Tensor::zeros(out_shape);
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::int64_t r = 0; r < rows; ++r)
    std::copy_n(src.data() + r * cols + offset, length, dst.data() + r * length);
  if (should_record(x)) {
    ImplPtr o = out.impl(), px = x.impl();
    record(out, [o, px, rows, cols, offset, length] {
      if (!has_incoming(o) || !px->requires_grad) return;
      auto g = px->grad_buffer();
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < length; ++c) g[sz(r * cols + offset + c)] += o->grad[sz(r * length + c)];
    });
  }
  return out;
}

namespace {

// Views a token tensor as [batch, tokens, width].
struct TokenView {
  std::int64_t batch, tokens, width;
};

TokenView token_view(const Tensor& t, const char* op) {
  if (t.rank() == 2) return {1, t.dim(0), t.dim(1)};
  if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
  throw DimensionError(std::string(op) + ": expects [N, D] or [B, N, D], got " + shape_to_string(t.shape()));
}

}  // namespace

Tensor concat_tokens(const Tensor& a, const Tensor& b) {
  const auto va = token_view(a, "concat_tokens");
  const auto vb = token_view(b, "concat_tokens");
  if (a.rank() != b.rank() || va.batch != vb.batch || va.width != vb.width) {
    throw DimensionError("concat_tokens: incompatible " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
  }
  const auto n = va.tokens + vb.tokens;
  Shape out_shape = a.rank() == 2 ? Shape{n, va.width} : Shape{va.batch, n, va.width};
  Tensor out = Tensor::zeros(out_shape);
  auto dst = out.mutable_data();
  const auto w = va.width;
  for (std::int64_t bi = 0; bi < va.batch; ++bi) {
    std::copy_n(a.data().data() + bi * va.tokens * w, va.tokens * w, dst.data() + bi * n * w);
    std::copy_n(b.data().data() + bi * vb.tokens * w, vb.tokens * w, dst.data() + (bi * n + va.tokens) * w);
  }
  if (should_record(a, b)) {
    ImplPtr o = out.impl(), pa = a.impl(), pb = b.impl();
    record(out, [o, pa, pb, va, vb, n, w] {
      if (!has_incoming(o)) return;
      for (std::int64_t bi = 0; bi < va.batch; ++bi) {
        if (pa->requires_grad) {
          auto g = pa->grad_buffer();
          for (std::int64_t i = 0; i < va.tokens * w; ++i) g[sz(bi * va.tokens * w + i)] += o->grad[sz(bi * n * w + i)];
        }
        if (pb->requires_grad) {
          auto g = pb->grad_buffer();
          for (std::int64_t i = 0; i < vb.tokens * w; ++i)
            g[sz(bi * vb.tokens * w + i)] += o->grad[sz((bi * n + va.tokens) * w + i)];
        }
      }
    });
  }
  return out;
}

Tensor slice_tokens(const Tensor& x, std::int64_t offset, std::int64_t length) {
  const auto v = token_view(x, "slice_tokens");
  if (offset < 0 || length < 0 || offset + length > v.tokens) {
    throw DimensionError("slice_tokens: range out of bounds for " + shape_to_string(x.shape()));
  }
  Shape out_shape = x.rank() == 2 ? Shape{length, v.width} : Shape{v.batch, length, v.width};
  Tensor out = Tensor::zeros(out_shape);
  auto dst = out.mutable_data();
  const auto w = v.width;
  for (std::int64_t bi = 0; bi < v.batch; ++bi)
    std::copy_n(x.data().data() + (bi * v.tokens + offset) * w, length * w, dst.data() + bi * length * w);
  if (should_record(x)) {
    ImplPtr o = out.impl(), px = x.impl();
    record(out, [o, px, v, offset, length, w] {
      if (!has_incoming(o) || !px->requires_grad) return;
      auto g = px->grad_buffer();
      for (std::int64_t bi = 0; bi < v.batch; ++bi)
        for (std::int64_t i = 0; i < length * w; ++i)
          g[sz((bi * v.tokens + offset) * w + i)] += o->grad[sz(bi * length * w + i)];
    });
  }
  return out;
}

namespace {

// Gather-style permutation op: out[i] = in[index[i]].
Tensor permute_gather(const Tensor& x, Shape out_shape, std::vector<std::int64_t> index) {
  Tensor out = Tensor::zeros(std::move(out_shape));
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[sz(index[i])];
  if (should_record(x)) {
    ImplPtr o = out.impl(), px = x.impl();
    record(out, [o, px, index = std::move(index)] {
      if (!has_incoming(o) || !px->requires_grad) return;
      auto g = px->grad_buffer();
      for (std::size_t i = 0; i < index.size(); ++i) g[sz(index[i])] += o->grad[i];
    });
  }
  return out;
}

}  // namespace

Tensor patchify(const Tensor& x, int patch) {
  if (x.rank() != 4) throw DimensionError("patchify: expects [B, C, H, W], got " + shape_to_string(x.shape()));
  const auto b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (patch <= 0 || h % patch != 0 || w % patch != 0) {
    throw DimensionError("patchify: " + shape_to_string(x.shape()) + " not divisible by patch " +
                         std::to_string(patch));
  }
  const auto gh = h / patch, gw = w / patch, feat = c * patch * patch;
  std::vector<std::int64_t> index(sz(b * gh * gw * feat));
  std::size_t k = 0;
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t py = 0; py < gh; ++py)
      for (std::int64_t px = 0; px < gw; ++px)
        for (std::int64_t ci = 0; ci < c; ++ci)
          for (std::int64_t dy = 0; dy < patch; ++dy)
            for (std::int64_t dx = 0; dx < patch; ++dx)
              index[k++] = ((bi * c + ci) * h + py * patch + dy) * w + px * patch + dx;
  return permute_gather(x, {b, gh * gw, feat}, std::move(index));
}

Tensor unpatchify(const Tensor& tokens, std::int64_t channels, std::int64_t height, std::int64_t width,
                  int patch) {
  if (tokens.rank() != 3 || patch <= 0 || height % patch != 0 || width % patch != 0) {
    throw DimensionError("unpatchify: bad arguments for " + shape_to_string(tokens.shape()));
  }
  const auto b = tokens.dim(0), gh = height / patch, gw = width / patch, feat = channels * patch * patch;
  if (tokens.dim(1) != gh * gw || tokens.dim(2) != feat) {
    throw DimensionError("unpatchify: tokens " + shape_to_string(tokens.shape()) + " do not match grid " +
                         std::to_string(gh) + "x" + std::to_string(gw) + " with " + std::to_string(feat) +
                         " features");
  }
  std::vector<std::int64_t> index(sz(b * channels * height * width));
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t ci = 0; ci < channels; ++ci)
      for (std::int64_t y = 0; y < height; ++y)
        for (std::int64_t x = 0; x < width; ++x) {
          const auto tok = (y / patch) * gw + x / patch;
          const auto f = (ci * patch + y % patch) * patch + x % patch;
          index[sz(((bi * channels + ci) * height + y) * width + x)] = (bi * gh * gw + tok) * feat + f;
        }
  return permute_gather(tokens, {b, channels, height, width}, std::move(index));
}

Tensor upsample_nearest(const Tensor& x, int factor) {
  if (x.rank() != 4 || factor <= 0) throw DimensionError("upsample_nearest: expects [B, C, H, W]");
  const auto bc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto oh = h * factor, ow = w * factor;
  std::vector<std::int64_t> index(sz(bc * oh * ow));
  for (std::int64_t p = 0; p < bc; ++p)
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t xx = 0; xx < ow; ++xx)
        index[sz((p * oh + y) * ow + xx)] = (p * h + y / factor) * w + xx / factor;
  return permute_gather(x, {x.dim(0), x.dim(1), oh, ow}, std::move(index));
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  if (should_record(x)) {
    ImplPtr o = out.impl(), px = x.impl();
    record(out, [o, px] {
      if (!has_incoming(o) || !px->requires_grad) return;
      auto g = px->grad_buffer();
      for (auto& gi : g) gi += o->grad[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return mul_const(sum(x), 1.0f / static_cast<float>(x.numel()));
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  if (a.numel() == 0) throw DimensionError("mse: empty tensors");
  const auto n = a.numel();
  double acc = 0.0;
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = double(da[i]) - db[i];
    acc += d * d;
  }
  Tensor out = Tensor::scalar(static_cast<float>(acc / double(n)));
  if (should_record(a, b)) {
    ImplPtr o = out.impl(), pa = a.impl(), pb = b.impl();
    record(out, [o, pa, pb, n] {
      if (!has_incoming(o)) return;
      const float s = 2.0f * o->grad[0] / static_cast<float>(n);
      if (pa->requires_grad) {
        auto g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * (pa->data[i] - pb->data[i]);
      }
      if (pb->requires_grad) {
        auto g = pb->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= s * (pa->data[i] - pb->data[i]);
      }
    });
  }
  return out;
}

Tensor weighted_sum(const Tensor& x, const Tensor& weights) {
  if (x.numel() != weights.numel()) throw DimensionError("weighted_sum: size mismatch");
  double acc = 0.0;
  auto dx = x.data(), dw = weights.data();
  for (std::size_t i = 0; i < dx.size(); ++i) acc += double(dx[i]) * dw[i];
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  if (should_record(x)) {
    ImplPtr o = out.impl(), px = x.impl(), pw = weights.impl();
    record(out, [o, px, pw] {
      if (!has_incoming(o) || !px->requires_grad) return;
      auto g = px->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[0] * pw->data[i];
    });
  }
  return out;
}

AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw DimensionError("scaled_dot_attention: expects rank-2 Q, K, V");
  }
  const auto d = q.dim(1);
  if (d <= 0 || k.dim(1) != d || k.dim(0) != v.dim(0) || v.dim(1) != d) {
    throw DimensionError("scaled_dot_attention: Q " + shape_to_string(q.shape()) + ", K " +
                         shape_to_string(k.shape()) + ", V " + shape_to_string(v.shape()));
  }
  if (!all_finite(q.data()) || !all_finite(k.data()) || !all_finite(v.data())) {
    throw NumericError("scaled_dot_attention: non-finite input");
  }
  Tensor logits = mul_const(matmul(q, transpose2d(k)), 1.0f / std::sqrt(static_cast<float>(d)));
  Tensor map = softmax_rows(logits);
  return {matmul(map, v), map};
}

}  // namespace fgp
