#pragma once

#include <functional>

#include "qmvos/tape.hpp"
#include "qmvos/tensor.hpp"

namespace qmvos {

// Scalar-valued differentiable map under test. The callable must evaluate
// the same function whether or not a tape is supplied.
using ScalarFn = std::function<Tensor(const Tensor&, Tape*)>;

// Compares the tape gradient of f at x against central finite differences
// with step h. Returns the max over components of |a-b| / max(1e-8, |a|+|b|).
// f must be smooth at x; callers keep inputs away from ReLU kinks.
double grad_check(const ScalarFn& f, const Tensor& x, double h = 1e-4);

}  // namespace qmvos
