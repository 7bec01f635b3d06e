#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace qmvos {

using Shape = std::vector<int64_t>;

int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);
bool shape_eq(const Shape& a, const Shape& b);

// Dense row-major tensor of doubles. Immutable after construction; copies
// share storage, so passing tensors around is cheap and thread-safe for
// readers. Identity (id()) is the storage address and is what the tape keys
// gradients on.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int64_t rank() const { return static_cast<int64_t>(shape().size()); }
  int64_t extent(int64_t axis) const;
  int64_t size() const;
  const std::vector<double>& data() const;

  // Value of a single-element tensor.
  double value() const;

  double at(const std::vector<int64_t>& idx) const;

  bool all_finite() const;

  const void* id() const { return impl_.get(); }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
  };
  std::shared_ptr<const Impl> impl_;
};

}  // namespace qmvos
