// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace fgp {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Storage is 64-byte aligned so vectorized kernels take the same code path
// (and summation order) regardless of where the heap puts a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using FloatBuffer = std::vector<float, AlignedAllocator<float>>;

namespace detail {

struct TensorImpl {
  Shape shape;
  FloatBuffer data;
  // Empty until a backward pass (or grad_buffer()) first touches it.
  FloatBuffer grad;
  bool requires_grad = false;

  std::span<float> grad_buffer();
};

}  // namespace detail

/// Dense row-major float32 tensor.
///
/// Copies share storage, like a handle. Data is treated as immutable once an
/// op has consumed it; the only in-place writers are initializers, the
/// optimizer, and checkpoint loading, all of which happen outside a tape.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, const std::vector<float>& data);
  static Tensor from_buffer(Shape shape, FloatBuffer data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor scalar(float value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  // Negative axes count from the back.
  std::int64_t dim(int axis) const;
  std::int64_t numel() const;

  std::span<const float> data() const;
  std::span<float> mutable_data();
  float item() const;
  float operator[](std::int64_t flat_index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const float> grad() const;
  void zero_grad();

  // Fresh storage, no gradient tracking.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

bool bit_equal(const Tensor& a, const Tensor& b);
bool all_finite(std::span<const float> values);

}  // namespace fgp
