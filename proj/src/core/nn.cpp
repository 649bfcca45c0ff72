// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fgpaint/nn.hpp"

#include <cmath>

#include "fgpaint/errors.hpp"
#include "fgpaint/ops.hpp"

namespace fgp {

const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::Vae: return "vae";
    case ParamGroup::Base: return "base";
    case ParamGroup::Adapter: return "adapter";
    case ParamGroup::ShapeEncoder: return "shape";
    case ParamGroup::Fusion: return "fusion";
  }
  return "?";
}

Tensor ParamStore::add(const std::string& name, ParamGroup group, Tensor init) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  init.set_requires_grad(!frozen(group));
  index_[name] = params_.size();
  params_.push_back({name, group, init});
  return init;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second].value;
}

void ParamStore::set_frozen(ParamGroup group, bool frozen) {
  frozen_[group] = frozen;
  for (auto& p : params_)
    if (p.group == group) {
      p.value.set_requires_grad(!frozen);
      p.value.zero_grad();
    }
}

bool ParamStore::frozen(ParamGroup group) const {
  auto it = frozen_.find(group);
  return it != frozen_.end() && it->second;
}

std::vector<Tensor> ParamStore::trainable() const {
  std::vector<Tensor> out;
  for (const auto& p : params_)
    if (!frozen(p.group)) out.push_back(p.value);
  return out;
}

std::vector<Tensor> ParamStore::group(ParamGroup g) const {
  std::vector<Tensor> out;
  for (const auto& p : params_)
    if (p.group == g) out.push_back(p.value);
  return out;
}

std::int64_t ParamStore::count(ParamGroup g) const {
  std::int64_t n = 0;
  for (const auto& p : params_)
    if (p.group == g) n += p.value.numel();
  return n;
}

std::int64_t ParamStore::total_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  out.frozen_ = frozen_;
  for (const auto& p : params_) {
    Tensor copy = p.value.detach();
    copy.set_requires_grad(p.value.requires_grad());
    out.index_[p.name] = out.params_.size();
    out.params_.push_back({p.name, p.group, copy});
  }
  return out;
}

Tensor Linear::operator()(const Tensor& x) const { return linear(x, w, b); }

Tensor Conv2d::operator()(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }

Linear make_linear(ParamStore& store, const std::string& name, ParamGroup group, std::int64_t in,
                   std::int64_t out, Rng& rng, bool bias) {
  const float a = static_cast<float>(std::sqrt(6.0 / double(in + out)));
  Linear l;
  l.w = store.add(name + ".w", group, rand_uniform({in, out}, rng, -a, a));
  if (bias) l.b = store.add(name + ".b", group, Tensor::zeros({out}));
  return l;
}

Conv2d make_conv(ParamStore& store, const std::string& name, ParamGroup group, std::int64_t in,
                 std::int64_t out, int kernel, int stride, int pad, Rng& rng) {
  const float a = static_cast<float>(std::sqrt(6.0 / double(in * kernel * kernel)));
  Conv2d c;
  c.w = store.add(name + ".w", group, rand_uniform({out, in, kernel, kernel}, rng, -a, a));
  c.b = store.add(name + ".b", group, Tensor::zeros({out}));
  c.stride = stride;
  c.pad = pad;
  return c;
}

}  // namespace fgp
