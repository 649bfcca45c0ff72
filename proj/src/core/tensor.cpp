// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fgpaint/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "fgpaint/errors.hpp"

namespace fgp {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw DimensionError("negative dimension in shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::span<float> detail::TensorImpl::grad_buffer() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
  return grad;
}

Tensor::Tensor(Shape shape, const std::vector<float>& data)
    : Tensor(from_buffer(std::move(shape), FloatBuffer(data.begin(), data.end()))) {}

Tensor Tensor::from_buffer(Shape shape, FloatBuffer data) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_to_string(shape));
  }
  Tensor t;
  t.impl_ = std::make_shared<detail::TensorImpl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::move(data);
  return t;
}

Tensor Tensor::zeros(Shape shape) {
  auto n = static_cast<std::size_t>(shape_numel(shape));
  return from_buffer(std::move(shape), FloatBuffer(n, 0.0f));
}

Tensor Tensor::full(Shape shape, float value) {
  auto n = static_cast<std::size_t>(shape_numel(shape));
  return from_buffer(std::move(shape), FloatBuffer(n, value));
}

Tensor Tensor::scalar(float value) { return Tensor({1}, {value}); }

const Shape& Tensor::shape() const {
  static const Shape kEmpty;
  return impl_ ? impl_->shape : kEmpty;
}

std::int64_t Tensor::dim(int axis) const {
  const auto r = static_cast<int>(rank());
  int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_to_string(shape()));
  }
  return shape()[static_cast<std::size_t>(a)];
}

std::int64_t Tensor::numel() const {
  return impl_ ? static_cast<std::int64_t>(impl_->data.size()) : 0;
}

std::span<const float> Tensor::data() const {
  if (!impl_) return {};
  return impl_->data;
}

std::span<float> Tensor::mutable_data() {
  if (!impl_) return {};
  return impl_->data;
}

float Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_to_string(shape()));
  return impl_->data[0];
}

float Tensor::operator[](std::int64_t flat_index) const {
  return impl_->data[static_cast<std::size_t>(flat_index)];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  if (impl_) impl_->requires_grad = value;
  return *this;
}

bool Tensor::has_grad() const { return impl_ && impl_->grad.size() == impl_->data.size() && !impl_->data.empty(); }

std::span<const float> Tensor::grad() const {
  if (!impl_) return {};
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.clear();
}

Tensor Tensor::detach() const {
  if (!impl_) return {};
  return from_buffer(impl_->shape, impl_->data);
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  auto da = a.data();
  auto db = b.data();
  return da.size() == db.size() &&
         (da.empty() || std::memcmp(da.data(), db.data(), da.size() * sizeof(float)) == 0);
}

bool all_finite(std::span<const float> values) {
  for (float v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace fgp
