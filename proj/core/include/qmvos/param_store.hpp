#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qmvos/tape.hpp"
#include "qmvos/tensor.hpp"

namespace qmvos {

// Named parameter tensors plus the per-parameter AdamW moment state. The
// step count is shared across all parameters and only moves forward.
class ParamStore {
 public:
  void add(const std::string& name, Tensor t);
  const Tensor& get(const std::string& name) const;
  void set(const std::string& name, Tensor t);
  bool has(const std::string& name) const;

  const std::map<std::string, Tensor>& items() const { return params_; }
  std::vector<std::string> names() const;
  size_t count() const { return params_.size(); }

  int64_t step_count() const { return step_; }

  // Moment buffers for AdamW, created zeroed on first use.
  std::vector<double>& moment1(const std::string& name);
  std::vector<double>& moment2(const std::string& name);
  void bump_step() { ++step_; }

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, std::vector<double>> m1_, m2_;
  int64_t step_ = 0;
};

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// One decoupled-weight-decay Adam step over every parameter in the store.
// Decay multiplies the parameter directly; the moment estimates see only
// the gradient. Bitwise deterministic for identical inputs.
void adamw_step(ParamStore& params, const std::map<std::string, Tensor>& grads,
                const AdamWConfig& cfg);

// Gradients of every parameter from the last backward() on `tape`; zeros
// for parameters that did not contribute to the loss.
std::map<std::string, Tensor> collect_grads(const ParamStore& params, const Tape& tape);

}  // namespace qmvos
