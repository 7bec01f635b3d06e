#include "qmvos/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "qmvos/error.hpp"

namespace qmvos {

double grad_check(const ScalarFn& f, const Tensor& x, double h) {
  Tape tape;
  Tensor loss = f(x, &tape);
  if (loss.size() != 1) throw contract_error("grad_check: f must return a scalar");
  tape.backward(loss);
  const Tensor analytic = tape.grad(x);

  double worst = 0.0;
  std::vector<double> base = x.data();
  for (size_t i = 0; i < base.size(); ++i) {
    std::vector<double> plus = base;
    plus[i] += h;
    std::vector<double> minus = base;
    minus[i] -= h;
    const double fp = f(Tensor(x.shape(), std::move(plus)), nullptr).value();
    const double fm = f(Tensor(x.shape(), std::move(minus)), nullptr).value();
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic.data()[i];
    const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace qmvos
