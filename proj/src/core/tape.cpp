// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fgpaint/tape.hpp"

#include <algorithm>

#include "fgpaint/errors.hpp"

namespace fgp {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape::Pause::Pause() : previous_(g_active_tape) { g_active_tape = nullptr; }
Tape::Pause::~Pause() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> backward) { entries_.push_back(std::move(backward)); }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw DimensionError("backward() expects a scalar loss, got " + shape_to_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw NumericError("backward() on a loss that does not depend on any trainable tensor");
  }
  Tape::Pause pause;
  auto g = loss.impl()->grad_buffer();
  g[0] += 1.0f;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  entries_.clear();
}

}  // namespace fgp
