#include "qmvos/tape.hpp"

#include "qmvos/error.hpp"

namespace qmvos {

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw contract_error("backward() requires a scalar loss");
  }
  grads_.clear();
  grad_buffer(loss)[0] = 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
    (*it)(*this);
  }
}

Tensor Tape::grad(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), it->second);
}

std::vector<double>& Tape::grad_buffer(const Tensor& t) {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) {
    it = grads_.emplace(t.id(), std::vector<double>(static_cast<size_t>(t.size()), 0.0)).first;
  }
  return it->second;
}

const std::vector<double>* Tape::find_grad(const Tensor& t) const {
  auto it = grads_.find(t.id());
  return it == grads_.end() ? nullptr : &it->second;
}

}  // namespace qmvos
