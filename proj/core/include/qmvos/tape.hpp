#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "qmvos/tensor.hpp"

namespace qmvos {

// Records the forward pass as an ordered list of backward steps and
// accumulates gradients keyed by tensor identity. Recording order is
// execution order, so running the steps in reverse visits the graph in
// reverse topological order. One tape per training step; not thread-safe.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a backward step. The closure must capture its operands by
  // value so their identities stay alive for the tape's lifetime.
  void record(std::function<void(Tape&)> step) { steps_.push_back(std::move(step)); }

  // Seeds d(loss)=1 and runs all recorded steps in reverse. Gradients from
  // a previous backward() on this tape are discarded first.
  void backward(const Tensor& loss);

  // Gradient of t accumulated by the last backward(); zeros if t never
  // contributed to the loss.
  Tensor grad(const Tensor& t) const;

  // Mutable accumulation buffer for t, created zero-filled on first use.
  std::vector<double>& grad_buffer(const Tensor& t);

  // Read-only buffer, or nullptr when no gradient has reached t. Backward
  // steps use this to skip work for unused outputs.
  const std::vector<double>* find_grad(const Tensor& t) const;

  size_t op_count() const { return steps_.size(); }

 private:
  std::vector<std::function<void(Tape&)>> steps_;
  std::unordered_map<const void*, std::vector<double>> grads_;
};

}  // namespace qmvos
