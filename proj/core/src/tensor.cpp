#include "qmvos/tensor.hpp"

#include <cmath>

#include "qmvos/error.hpp"

namespace qmvos {

int64_t shape_size(const Shape& shape) {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  if (shape.empty()) return "scalar";
  std::string s;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s;
}

bool shape_eq(const Shape& a, const Shape& b) { return a == b; }

Tensor::Tensor(Shape shape, std::vector<double> data) {
  for (int64_t e : shape) {
    if (e <= 0) throw shape_error("extent must be positive, got " + shape_str(shape));
  }
  if (static_cast<int64_t>(data.size()) != shape_size(shape)) {
    throw shape_error("data length " + std::to_string(data.size()) + " does not match shape " +
                      shape_str(shape));
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl_ = std::move(impl);
}

Tensor Tensor::zeros(Shape shape) {
  std::vector<double> d(static_cast<size_t>(shape_size(shape)), 0.0);
  return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::full(Shape shape, double value) {
  std::vector<double> d(static_cast<size_t>(shape_size(shape)), value);
  return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

const Shape& Tensor::shape() const {
  if (!impl_) throw contract_error("use of undefined tensor");
  return impl_->shape;
}

int64_t Tensor::extent(int64_t axis) const {
  const Shape& s = shape();
  if (axis < 0 || axis >= static_cast<int64_t>(s.size())) {
    throw shape_error("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[static_cast<size_t>(axis)];
}

int64_t Tensor::size() const { return shape_size(shape()); }

const std::vector<double>& Tensor::data() const {
  if (!impl_) throw contract_error("use of undefined tensor");
  return impl_->data;
}

double Tensor::value() const {
  if (size() != 1) throw contract_error("value() on non-scalar tensor " + shape_str(shape()));
  return data()[0];
}

double Tensor::at(const std::vector<int64_t>& idx) const {
  const Shape& s = shape();
  if (idx.size() != s.size()) throw shape_error("index rank mismatch");
  int64_t off = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= s[i]) throw shape_error("index out of range");
    off = off * s[i] + idx[i];
  }
  return data()[static_cast<size_t>(off)];
}

bool Tensor::all_finite() const {
  for (double v : data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace qmvos
