// Copyright 2026 The fgpaint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "fgpaint/tensor.hpp"

namespace fgp {

/// Define-by-run reverse-mode tape.
///
/// While a Tape::Scope is alive on a thread, every op whose inputs require
/// gradients appends a backward closure here. backward() seeds d(loss)=1 and
/// replays the closures in reverse order. A tape belongs to one thread;
/// independent tapes on different threads do not interact.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Makes `tape` the active tape for this thread until destruction.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  // Suspends recording on this thread (inference, finite differences).
  class Pause {
   public:
    Pause();
    ~Pause();
    Pause(const Pause&) = delete;
    Pause& operator=(const Pause&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active();

  void record(std::function<void()> backward);
  void backward(const Tensor& loss);
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  std::vector<std::function<void()>> entries_;
};

// True when an op over `inputs` must be recorded.
template <typename... Ts>
bool should_record(const Ts&... inputs) {
  return Tape::active() != nullptr && (inputs.requires_grad() || ...);
}

}  // namespace fgp
