// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "fgpaint/rng.hpp"
#include "fgpaint/tensor.hpp"

namespace fgp {

enum class ParamGroup { Vae, Base, Adapter, ShapeEncoder, Fusion };

const char* group_name(ParamGroup g);

struct Param {
  std::string name;
  ParamGroup group;
  Tensor value;
};

/// Owns every named parameter of a model. Freezing a group clears
/// requires_grad on its tensors so no gradients flow into them.
class ParamStore {
 public:
  Tensor add(const std::string& name, ParamGroup group, Tensor init);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  void set_frozen(ParamGroup group, bool frozen);
  bool frozen(ParamGroup group) const;

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  std::vector<Tensor> trainable() const;
  std::vector<Tensor> group(ParamGroup g) const;
  std::int64_t count(ParamGroup g) const;
  std::int64_t total_count() const;

  void zero_grad();
  // Deep copy; the copy owns fresh storage.
  ParamStore clone() const;

 private:
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
  std::map<ParamGroup, bool> frozen_;
};

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out] or undefined
  Tensor operator()(const Tensor& x) const;
  std::int64_t in() const { return w.dim(0); }
  std::int64_t out() const { return w.dim(1); }
};

struct Conv2d {
  Tensor w;  // [out, in, k, k]
  Tensor b;  // [out]
  int stride = 1;
  int pad = 1;
  Tensor operator()(const Tensor& x) const;
};

// Xavier-uniform weight, zero bias.
Linear make_linear(ParamStore& store, const std::string& name, ParamGroup group, std::int64_t in,
                   std::int64_t out, Rng& rng, bool bias = true);
// He-uniform weight (fan-in), zero bias.
Conv2d make_conv(ParamStore& store, const std::string& name, ParamGroup group, std::int64_t in,
                 std::int64_t out, int kernel, int stride, int pad, Rng& rng);

}  // namespace fgp
