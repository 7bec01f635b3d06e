#include "qmvos/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "qmvos/error.hpp"

namespace qmvos {

namespace {

// Sums in ascending value order. Equal multisets of terms produce bitwise
// equal results, which is what makes softmax and the attention weighted sum
// exactly permutation-invariant along the reduced axis.
double sorted_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

// c (n x m) += a (n x k) * b (k x m), summing over l in ascending order.
void gemm_accum(const double* a, const double* b, double* c, int64_t n, int64_t k, int64_t m) {
  for (int64_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * m;
    for (int64_t l = 0; l < k; ++l) {
      const double av = arow[l];
      const double* brow = b + l * m;
      for (int64_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

void check_rank(const Tensor& t, int64_t rank, const char* op) {
  if (t.rank() != rank) {
    throw shape_error(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                      shape_str(t.shape()));
  }
}

struct AxisSplit {
  int64_t outer, n, inner;
};

AxisSplit split_axis(const Shape& s, int64_t axis, const char* op) {
  if (axis < 0 || axis >= static_cast<int64_t>(s.size())) {
    throw shape_error(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                      shape_str(s));
  }
  AxisSplit sp{1, s[static_cast<size_t>(axis)], 1};
  for (int64_t i = 0; i < axis; ++i) sp.outer *= s[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) sp.inner *= s[i];
  return sp;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
  if (!shape_eq(a.shape(), b.shape())) {
    throw shape_error("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(a.data());
  const auto& bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  Tensor y(a.shape(), std::move(out));
  if (tape) {
    tape->record([a, b, y](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      auto& ga = t.grad_buffer(a);
      for (size_t i = 0; i < gy->size(); ++i) ga[i] += (*gy)[i];
      auto& gb = t.grad_buffer(b);
      for (size_t i = 0; i < gy->size(); ++i) gb[i] += (*gy)[i];
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
  if (!shape_eq(a.shape(), b.shape())) {
    throw shape_error("mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(a.data());
  const auto& bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  Tensor y(a.shape(), std::move(out));
  if (tape) {
    tape->record([a, b, y](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      const auto& ad = a.data();
      const auto& bd2 = b.data();
      auto& ga = t.grad_buffer(a);
      for (size_t i = 0; i < gy->size(); ++i) ga[i] += (*gy)[i] * bd2[i];
      auto& gb = t.grad_buffer(b);
      for (size_t i = 0; i < gy->size(); ++i) gb[i] += (*gy)[i] * ad[i];
    });
  }
  return y;
}

Tensor scale(const Tensor& a, double c, Tape* tape) {
  std::vector<double> out(a.data());
  for (double& v : out) v *= c;
  Tensor y(a.shape(), std::move(out));
  if (tape) {
    tape->record([a, y, c](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      auto& ga = t.grad_buffer(a);
      for (size_t i = 0; i < gy->size(); ++i) ga[i] += c * (*gy)[i];
    });
  }
  return y;
}

Tensor scale_by(const Tensor& a, const Tensor& s, Tape* tape) {
  if (s.size() != 1) throw shape_error("scale_by: scale must be a single value");
  const double sv = s.data()[0];
  std::vector<double> out(a.data());
  for (double& v : out) v *= sv;
  Tensor y(a.shape(), std::move(out));
  if (tape) {
    tape->record([a, s, y, sv](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      const auto& ad = a.data();
      auto& ga = t.grad_buffer(a);
      for (size_t i = 0; i < gy->size(); ++i) ga[i] += sv * (*gy)[i];
      double acc = 0.0;
      for (size_t i = 0; i < gy->size(); ++i) acc += (*gy)[i] * ad[i];
      t.grad_buffer(s)[0] += acc;
    });
  }
  return y;
}

Tensor reciprocal(const Tensor& a, Tape* tape) {
  std::vector<double> out(a.data());
  for (double& v : out) v = 1.0 / v;
  Tensor y(a.shape(), std::move(out));
  if (tape) {
    tape->record([a, y](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      const auto& yd = y.data();
      auto& ga = t.grad_buffer(a);
      for (size_t i = 0; i < gy->size(); ++i) ga[i] -= (*gy)[i] * yd[i] * yd[i];
    });
  }
  return y;
}

Tensor relu(const Tensor& a, Tape* tape) {
  std::vector<double> out(a.data());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  Tensor y(a.shape(), std::move(out));
  if (tape) {
    tape->record([a, y](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      const auto& ad = a.data();
      auto& ga = t.grad_buffer(a);
      for (size_t i = 0; i < gy->size(); ++i) {
        if (ad[i] > 0.0) ga[i] += (*gy)[i];
      }
    });
  }
  return y;
}

Tensor add_rowvec(const Tensor& x, const Tensor& v, Tape* tape) {
  check_rank(x, 2, "add_rowvec");
  check_rank(v, 1, "add_rowvec");
  const int64_t n = x.extent(0), m = x.extent(1);
  if (v.extent(0) != m) {
    throw shape_error("add_rowvec: vector length " + std::to_string(v.extent(0)) +
                      " vs row width " + std::to_string(m));
  }
  std::vector<double> out(x.data());
  const auto& vd = v.data();
  for (int64_t i = 0; i < n; ++i) {
    double* row = out.data() + i * m;
    for (int64_t j = 0; j < m; ++j) row[j] += vd[static_cast<size_t>(j)];
  }
  Tensor y(x.shape(), std::move(out));
  if (tape) {
    tape->record([x, v, y, n, m](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      auto& gx = t.grad_buffer(x);
      for (size_t i = 0; i < gy->size(); ++i) gx[i] += (*gy)[i];
      auto& gv = t.grad_buffer(v);
      for (int64_t i = 0; i < n; ++i) {
        const double* row = gy->data() + i * m;
        for (int64_t j = 0; j < m; ++j) gv[static_cast<size_t>(j)] += row[j];
      }
    });
  }
  return y;
}

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape, bool canonical) {
  check_rank(a, 2, "matmul");
  check_rank(b, 2, "matmul");
  const int64_t n = a.extent(0), k = a.extent(1), m = b.extent(1);
  if (b.extent(0) != k) {
    throw shape_error("matmul: inner dims " + std::to_string(k) + " vs " +
                      std::to_string(b.extent(0)));
  }
  std::vector<double> out(static_cast<size_t>(n * m), 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  if (canonical) {
    std::vector<double> terms(static_cast<size_t>(k));
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < m; ++j) {
        for (int64_t l = 0; l < k; ++l) terms[static_cast<size_t>(l)] = ad[i * k + l] * bd[l * m + j];
        out[static_cast<size_t>(i * m + j)] = sorted_sum(terms);
      }
    }
  } else {
    gemm_accum(ad, bd, out.data(), n, k, m);
  }
  Tensor y(Shape{n, m}, std::move(out));
  if (tape) {
    tape->record([a, b, y, n, k, m](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      const double* gyd = gy->data();
      const double* ad2 = a.data().data();
      const double* bd2 = b.data().data();
      {
        auto& ga = t.grad_buffer(a);
        // da[i,l] = sum_j gy[i,j] * b[l,j]
        for (int64_t i = 0; i < n; ++i) {
          for (int64_t l = 0; l < k; ++l) {
            double acc = 0.0;
            const double* gr = gyd + i * m;
            const double* br = bd2 + l * m;
            for (int64_t j = 0; j < m; ++j) acc += gr[j] * br[j];
            ga[static_cast<size_t>(i * k + l)] += acc;
          }
        }
      }
      {
        auto& gb = t.grad_buffer(b);
        // db[l,j] = sum_i a[i,l] * gy[i,j]
        for (int64_t i = 0; i < n; ++i) {
          const double* gr = gyd + i * m;
          for (int64_t l = 0; l < k; ++l) {
            const double av = ad2[i * k + l];
            double* dst = gb.data() + l * m;
            for (int64_t j = 0; j < m; ++j) dst[j] += av * gr[j];
          }
        }
      }
    });
  }
  return y;
}

Tensor transpose2d(const Tensor& a, Tape* tape) {
  check_rank(a, 2, "transpose2d");
  const int64_t n = a.extent(0), m = a.extent(1);
  std::vector<double> out(static_cast<size_t>(n * m));
  const auto& ad = a.data();
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < m; ++j) out[static_cast<size_t>(j * n + i)] = ad[static_cast<size_t>(i * m + j)];
  }
  Tensor y(Shape{m, n}, std::move(out));
  if (tape) {
    tape->record([a, y, n, m](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      auto& ga = t.grad_buffer(a);
      for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < m; ++j) {
          ga[static_cast<size_t>(i * m + j)] += (*gy)[static_cast<size_t>(j * n + i)];
        }
      }
    });
  }
  return y;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b, Tape* tape) {
  return add_rowvec(matmul(x, w, tape), b, tape);
}

Tensor softmax(const Tensor& x, int64_t axis, Tape* tape) {
  const AxisSplit sp = split_axis(x.shape(), axis, "softmax");
  const auto& xd = x.data();
  std::vector<double> out(xd.size());
  std::vector<double> exps(static_cast<size_t>(sp.n));
  for (int64_t o = 0; o < sp.outer; ++o) {
    for (int64_t in = 0; in < sp.inner; ++in) {
      const int64_t base = o * sp.n * sp.inner + in;
      double mx = xd[static_cast<size_t>(base)];
      for (int64_t i = 1; i < sp.n; ++i) mx = std::max(mx, xd[static_cast<size_t>(base + i * sp.inner)]);
      for (int64_t i = 0; i < sp.n; ++i) {
        exps[static_cast<size_t>(i)] = std::exp(xd[static_cast<size_t>(base + i * sp.inner)] - mx);
      }
      std::vector<double> terms(exps);
      const double denom = sorted_sum(terms);
      for (int64_t i = 0; i < sp.n; ++i) {
        out[static_cast<size_t>(base + i * sp.inner)] = exps[static_cast<size_t>(i)] / denom;
      }
    }
  }
  Tensor y(x.shape(), std::move(out));
  if (tape) {
    tape->record([x, y, sp](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      const auto& yd = y.data();
      auto& gx = t.grad_buffer(x);
      for (int64_t o = 0; o < sp.outer; ++o) {
        for (int64_t in = 0; in < sp.inner; ++in) {
          const int64_t base = o * sp.n * sp.inner + in;
          double dot = 0.0;
          for (int64_t i = 0; i < sp.n; ++i) {
            const size_t ix = static_cast<size_t>(base + i * sp.inner);
            dot += (*gy)[ix] * yd[ix];
          }
          for (int64_t i = 0; i < sp.n; ++i) {
            const size_t ix = static_cast<size_t>(base + i * sp.inner);
            gx[ix] += yd[ix] * ((*gy)[ix] - dot);
          }
        }
      }
    });
  }
  return y;
}

Tensor log_softmax(const Tensor& x, int64_t axis, Tape* tape) {
  const AxisSplit sp = split_axis(x.shape(), axis, "log_softmax");
  const auto& xd = x.data();
  std::vector<double> out(xd.size());
  std::vector<double> exps(static_cast<size_t>(sp.n));
  for (int64_t o = 0; o < sp.outer; ++o) {
    for (int64_t in = 0; in < sp.inner; ++in) {
      const int64_t base = o * sp.n * sp.inner + in;
      double mx = xd[static_cast<size_t>(base)];
      for (int64_t i = 1; i < sp.n; ++i) mx = std::max(mx, xd[static_cast<size_t>(base + i * sp.inner)]);
      for (int64_t i = 0; i < sp.n; ++i) {
        exps[static_cast<size_t>(i)] = std::exp(xd[static_cast<size_t>(base + i * sp.inner)] - mx);
      }
      std::vector<double> terms(exps);
      const double lse = mx + std::log(sorted_sum(terms));
      for (int64_t i = 0; i < sp.n; ++i) {
        out[static_cast<size_t>(base + i * sp.inner)] = xd[static_cast<size_t>(base + i * sp.inner)] - lse;
      }
    }
  }
  Tensor y(x.shape(), std::move(out));
  if (tape) {
    tape->record([x, y, sp](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      const auto& yd = y.data();
      auto& gx = t.grad_buffer(x);
      for (int64_t o = 0; o < sp.outer; ++o) {
        for (int64_t in = 0; in < sp.inner; ++in) {
          const int64_t base = o * sp.n * sp.inner + in;
          double gsum = 0.0;
          for (int64_t i = 0; i < sp.n; ++i) gsum += (*gy)[static_cast<size_t>(base + i * sp.inner)];
          for (int64_t i = 0; i < sp.n; ++i) {
            const size_t ix = static_cast<size_t>(base + i * sp.inner);
            gx[ix] += (*gy)[ix] - std::exp(yd[ix]) * gsum;
          }
        }
      }
    });
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tape* tape) {
  if (x.rank() < 1) throw shape_error("layer_norm: input must have rank >= 1");
  const int64_t d = x.extent(x.rank() - 1);
  if (gamma.rank() != 1 || gamma.extent(0) != d || beta.rank() != 1 || beta.extent(0) != d) {
    throw shape_error("layer_norm: affine shapes must be {" + std::to_string(d) + "}");
  }
  constexpr double kEps = 1e-5;
  const int64_t rows = x.size() / d;
  const auto& xd = x.data();
  const auto& gd = gamma.data();
  const auto& bd = beta.data();
  std::vector<double> out(xd.size());
  std::vector<double> xhat(xd.size());
  std::vector<double> inv_sigma(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * d;
    double mean = 0.0;
    for (int64_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kEps);
    inv_sigma[static_cast<size_t>(r)] = inv;
    for (int64_t j = 0; j < d; ++j) {
      const double xh = (row[j] - mean) * inv;
      xhat[static_cast<size_t>(r * d + j)] = xh;
      out[static_cast<size_t>(r * d + j)] = gd[static_cast<size_t>(j)] * xh + bd[static_cast<size_t>(j)];
    }
  }
  Tensor y(x.shape(), std::move(out));
  if (tape) {
    tape->record([x, gamma, beta, y, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma), rows,
                  d](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      const auto& gd2 = gamma.data();
      {
        auto& gg = t.grad_buffer(gamma);
        for (int64_t r = 0; r < rows; ++r) {
          for (int64_t j = 0; j < d; ++j) {
            const size_t ix = static_cast<size_t>(r * d + j);
            gg[static_cast<size_t>(j)] += (*gy)[ix] * xhat[ix];
          }
        }
      }
      {
        auto& gb = t.grad_buffer(beta);
        for (int64_t r = 0; r < rows; ++r) {
          for (int64_t j = 0; j < d; ++j) gb[static_cast<size_t>(j)] += (*gy)[static_cast<size_t>(r * d + j)];
        }
      }
      auto& gx = t.grad_buffer(x);
      for (int64_t r = 0; r < rows; ++r) {
        const double inv = inv_sigma[static_cast<size_t>(r)];
        double s1 = 0.0, s2 = 0.0;
        for (int64_t j = 0; j < d; ++j) {
          const size_t ix = static_cast<size_t>(r * d + j);
          const double dxh = (*gy)[ix] * gd2[static_cast<size_t>(j)];
          s1 += dxh;
          s2 += dxh * xhat[ix];
        }
        s1 /= static_cast<double>(d);
        s2 /= static_cast<double>(d);
        for (int64_t j = 0; j < d; ++j) {
          const size_t ix = static_cast<size_t>(r * d + j);
          const double dxh = (*gy)[ix] * gd2[static_cast<size_t>(j)];
          gx[ix] += inv * (dxh - s1 - xhat[ix] * s2);
        }
      }
    });
  }
  return y;
}

Tensor conv1x1(const Tensor& x, const Tensor& w, const Tensor& b, Tape* tape) {
  check_rank(x, 3, "conv1x1");
  check_rank(w, 2, "conv1x1");
  check_rank(b, 1, "conv1x1");
  const int64_t c = x.extent(0), h = x.extent(1), wd = x.extent(2);
  const int64_t co = w.extent(0);
  if (w.extent(1) != c) {
    throw shape_error("conv1x1: weight expects " + std::to_string(w.extent(1)) + " channels, input has " +
                      std::to_string(c));
  }
  if (b.extent(0) != co) throw shape_error("conv1x1: bias length mismatch");
  const int64_t p = h * wd;
  std::vector<double> out(static_cast<size_t>(co * p), 0.0);
  gemm_accum(w.data().data(), x.data().data(), out.data(), co, c, p);
  const auto& bd = b.data();
  for (int64_t i = 0; i < co; ++i) {
    double* row = out.data() + i * p;
    const double bv = bd[static_cast<size_t>(i)];
    for (int64_t j = 0; j < p; ++j) row[j] += bv;
  }
  Tensor y(Shape{co, h, wd}, std::move(out));
  if (tape) {
    tape->record([x, w, b, y, c, co, p](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      const double* gyd = gy->data();
      const double* xd = x.data().data();
      const double* wd2 = w.data().data();
      {
        auto& gb = t.grad_buffer(b);
        for (int64_t i = 0; i < co; ++i) {
          double acc = 0.0;
          const double* row = gyd + i * p;
          for (int64_t j = 0; j < p; ++j) acc += row[j];
          gb[static_cast<size_t>(i)] += acc;
        }
      }
      {
        auto& gw = t.grad_buffer(w);
        // dw[i,l] = sum_p gy[i,p] * x[l,p]
        for (int64_t i = 0; i < co; ++i) {
          for (int64_t l = 0; l < c; ++l) {
            double acc = 0.0;
            const double* gr = gyd + i * p;
            const double* xr = xd + l * p;
            for (int64_t j = 0; j < p; ++j) acc += gr[j] * xr[j];
            gw[static_cast<size_t>(i * c + l)] += acc;
          }
        }
      }
      {
        auto& gx = t.grad_buffer(x);
        // dx[l,p] = sum_i w[i,l] * gy[i,p]
        for (int64_t i = 0; i < co; ++i) {
          const double* gr = gyd + i * p;
          for (int64_t l = 0; l < c; ++l) {
            const double wv = wd2[static_cast<size_t>(i * c + l)];
            double* dst = gx.data() + l * p;
            for (int64_t j = 0; j < p; ++j) dst[j] += wv * gr[j];
          }
        }
      }
    });
  }
  return y;
}

namespace {

struct ConvDims {
  int64_t c, h, w, co, kh, kw, oh, ow;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const Tensor& b, int64_t stride, int64_t pad) {
  check_rank(x, 3, "conv2d");
  check_rank(w, 4, "conv2d");
  check_rank(b, 1, "conv2d");
  if (stride < 1) throw shape_error("conv2d: stride must be >= 1");
  if (pad < 0) throw shape_error("conv2d: pad must be >= 0");
  ConvDims d;
  d.c = x.extent(0);
  d.h = x.extent(1);
  d.w = x.extent(2);
  d.co = w.extent(0);
  d.kh = w.extent(2);
  d.kw = w.extent(3);
  if (w.extent(1) != d.c) {
    throw shape_error("conv2d: weight expects " + std::to_string(w.extent(1)) +
                      " channels, input has " + std::to_string(d.c));
  }
  if (b.extent(0) != d.co) throw shape_error("conv2d: bias length mismatch");
  d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
  d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.oh < 1 || d.ow < 1) throw shape_error("conv2d: kernel larger than padded input");
  return d;
}

// col is (c*kh*kw) x (oh*ow)
void im2col(const double* x, const ConvDims& d, int64_t stride, int64_t pad, double* col) {
  const int64_t q = d.oh * d.ow;
  for (int64_t ci = 0; ci < d.c; ++ci) {
    for (int64_t ky = 0; ky < d.kh; ++ky) {
      for (int64_t kx = 0; kx < d.kw; ++kx) {
        double* crow = col + ((ci * d.kh + ky) * d.kw + kx) * q;
        for (int64_t oy = 0; oy < d.oh; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          double* dst = crow + oy * d.ow;
          if (iy < 0 || iy >= d.h) {
            for (int64_t ox = 0; ox < d.ow; ++ox) dst[ox] = 0.0;
            continue;
          }
          const double* src = x + (ci * d.h + iy) * d.w;
          for (int64_t ox = 0; ox < d.ow; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            dst[ox] = (ix < 0 || ix >= d.w) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int64_t stride, int64_t pad,
              Tape* tape) {
  const ConvDims d = conv_dims(x, w, b, stride, pad);
  const int64_t k = d.c * d.kh * d.kw;
  const int64_t q = d.oh * d.ow;
  std::vector<double> col(static_cast<size_t>(k * q));
  im2col(x.data().data(), d, stride, pad, col.data());
  std::vector<double> out(static_cast<size_t>(d.co * q), 0.0);
  gemm_accum(w.data().data(), col.data(), out.data(), d.co, k, q);
  const auto& bd = b.data();
  for (int64_t i = 0; i < d.co; ++i) {
    double* row = out.data() + i * q;
    const double bv = bd[static_cast<size_t>(i)];
    for (int64_t j = 0; j < q; ++j) row[j] += bv;
  }
  Tensor y(Shape{d.co, d.oh, d.ow}, std::move(out));
  if (tape) {
    tape->record([x, w, b, y, d, stride, pad, k, q](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      const double* gyd = gy->data();
      std::vector<double> col2(static_cast<size_t>(k * q));
      im2col(x.data().data(), d, stride, pad, col2.data());
      {
        auto& gb = t.grad_buffer(b);
        for (int64_t i = 0; i < d.co; ++i) {
          double acc = 0.0;
          const double* row = gyd + i * q;
          for (int64_t j = 0; j < q; ++j) acc += row[j];
          gb[static_cast<size_t>(i)] += acc;
        }
      }
      {
        auto& gw = t.grad_buffer(w);
        // dw[i,r] = sum_q gy[i,q] * col[r,q]
        for (int64_t i = 0; i < d.co; ++i) {
          const double* gr = gyd + i * q;
          for (int64_t r = 0; r < k; ++r) {
            double acc = 0.0;
            const double* cr = col2.data() + r * q;
            for (int64_t j = 0; j < q; ++j) acc += gr[j] * cr[j];
            gw[static_cast<size_t>(i * k + r)] += acc;
          }
        }
      }
      {
        // dcol = w^T gy, then scatter back through the im2col mapping.
        std::vector<double> dcol(static_cast<size_t>(k * q), 0.0);
        const double* wd = w.data().data();
        for (int64_t i = 0; i < d.co; ++i) {
          const double* gr = gyd + i * q;
          for (int64_t r = 0; r < k; ++r) {
            const double wv = wd[static_cast<size_t>(i * k + r)];
            double* dst = dcol.data() + r * q;
            for (int64_t j = 0; j < q; ++j) dst[j] += wv * gr[j];
          }
        }
        auto& gx = t.grad_buffer(x);
        for (int64_t ci = 0; ci < d.c; ++ci) {
          for (int64_t ky = 0; ky < d.kh; ++ky) {
            for (int64_t kx = 0; kx < d.kw; ++kx) {
              const double* crow = dcol.data() + ((ci * d.kh + ky) * d.kw + kx) * q;
              for (int64_t oy = 0; oy < d.oh; ++oy) {
                const int64_t iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= d.h) continue;
                double* dst = gx.data() + (ci * d.h + iy) * d.w;
                const double* src = crow + oy * d.ow;
                for (int64_t ox = 0; ox < d.ow; ++ox) {
                  const int64_t ix = ox * stride - pad + kx;
                  if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
                }
              }
            }
          }
        }
      }
    });
  }
  return y;
}

namespace {

struct UpsampleTaps {
  std::vector<int64_t> i0, i1;
  std::vector<double> f;
};

// Source taps for align-corners-false 2x upsampling with edge clamping.
UpsampleTaps upsample_taps(int64_t in_extent) {
  UpsampleTaps t;
  const int64_t out = 2 * in_extent;
  t.i0.resize(static_cast<size_t>(out));
  t.i1.resize(static_cast<size_t>(out));
  t.f.resize(static_cast<size_t>(out));
  for (int64_t o = 0; o < out; ++o) {
    const double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    const double fl = std::floor(src);
    const int64_t i0 = static_cast<int64_t>(fl);
    t.f[static_cast<size_t>(o)] = src - fl;
    t.i0[static_cast<size_t>(o)] = std::clamp<int64_t>(i0, 0, in_extent - 1);
    t.i1[static_cast<size_t>(o)] = std::clamp<int64_t>(i0 + 1, 0, in_extent - 1);
  }
  return t;
}

}  // namespace

Tensor bilinear_upsample2x(const Tensor& x, Tape* tape) {
  check_rank(x, 3, "bilinear_upsample2x");
  const int64_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  const UpsampleTaps ty = upsample_taps(h);
  const UpsampleTaps tx = upsample_taps(w);
  const int64_t oh = 2 * h, ow = 2 * w;
  const auto& xd = x.data();
  std::vector<double> out(static_cast<size_t>(c * oh * ow));
  for (int64_t ci = 0; ci < c; ++ci) {
    const double* src = xd.data() + ci * h * w;
    double* dst = out.data() + ci * oh * ow;
    for (int64_t oy = 0; oy < oh; ++oy) {
      const double fy = ty.f[static_cast<size_t>(oy)];
      const double* r0 = src + ty.i0[static_cast<size_t>(oy)] * w;
      const double* r1 = src + ty.i1[static_cast<size_t>(oy)] * w;
      for (int64_t ox = 0; ox < ow; ++ox) {
        const double fx = tx.f[static_cast<size_t>(ox)];
        const int64_t x0 = tx.i0[static_cast<size_t>(ox)], x1 = tx.i1[static_cast<size_t>(ox)];
        dst[oy * ow + ox] = (1.0 - fy) * ((1.0 - fx) * r0[x0] + fx * r0[x1]) +
                            fy * ((1.0 - fx) * r1[x0] + fx * r1[x1]);
      }
    }
  }
  Tensor y(Shape{c, oh, ow}, std::move(out));
  if (tape) {
    tape->record([x, y, c, h, w, oh, ow](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      const UpsampleTaps ty2 = upsample_taps(h);
      const UpsampleTaps tx2 = upsample_taps(w);
      auto& gx = t.grad_buffer(x);
      for (int64_t ci = 0; ci < c; ++ci) {
        double* dst = gx.data() + ci * h * w;
        const double* src = gy->data() + ci * oh * ow;
        for (int64_t oy = 0; oy < oh; ++oy) {
          const double fy = ty2.f[static_cast<size_t>(oy)];
          const int64_t y0 = ty2.i0[static_cast<size_t>(oy)], y1 = ty2.i1[static_cast<size_t>(oy)];
          for (int64_t ox = 0; ox < ow; ++ox) {
            const double fx = tx2.f[static_cast<size_t>(ox)];
            const int64_t x0 = tx2.i0[static_cast<size_t>(ox)], x1 = tx2.i1[static_cast<size_t>(ox)];
            const double g = src[oy * ow + ox];
            dst[y0 * w + x0] += (1.0 - fy) * (1.0 - fx) * g;
            dst[y0 * w + x1] += (1.0 - fy) * fx * g;
            dst[y1 * w + x0] += fy * (1.0 - fx) * g;
            dst[y1 * w + x1] += fy * fx * g;
          }
        }
      }
    });
  }
  return y;
}

Tensor area_downsample(const Tensor& x, int64_t factor, Tape* tape) {
  if (factor < 1) throw shape_error("area_downsample: factor must be >= 1");
  if (x.rank() != 2 && x.rank() != 3) {
    throw shape_error("area_downsample: expected rank 2 or 3, got " + shape_str(x.shape()));
  }
  const bool has_channels = x.rank() == 3;
  const int64_t c = has_channels ? x.extent(0) : 1;
  const int64_t h = x.extent(has_channels ? 1 : 0);
  const int64_t w = x.extent(has_channels ? 2 : 1);
  if (h % factor != 0 || w % factor != 0) {
    throw shape_error("area_downsample: extents " + std::to_string(h) + "x" + std::to_string(w) +
                      " not divisible by " + std::to_string(factor));
  }
  const int64_t oh = h / factor, ow = w / factor;
  const double inv = 1.0 / static_cast<double>(factor * factor);
  const auto& xd = x.data();
  std::vector<double> out(static_cast<size_t>(c * oh * ow), 0.0);
  for (int64_t ci = 0; ci < c; ++ci) {
    const double* src = xd.data() + ci * h * w;
    double* dst = out.data() + ci * oh * ow;
    for (int64_t oy = 0; oy < oh; ++oy) {
      for (int64_t ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (int64_t dy = 0; dy < factor; ++dy) {
          const double* row = src + (oy * factor + dy) * w + ox * factor;
          for (int64_t dx = 0; dx < factor; ++dx) acc += row[dx];
        }
        dst[oy * ow + ox] = acc * inv;
      }
    }
  }
  Shape oshape = has_channels ? Shape{c, oh, ow} : Shape{oh, ow};
  Tensor y(std::move(oshape), std::move(out));
  if (tape) {
    tape->record([x, y, c, h, w, oh, ow, factor, inv](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      auto& gx = t.grad_buffer(x);
      for (int64_t ci = 0; ci < c; ++ci) {
        double* dst = gx.data() + ci * h * w;
        const double* src = gy->data() + ci * oh * ow;
        for (int64_t oy = 0; oy < oh; ++oy) {
          for (int64_t ox = 0; ox < ow; ++ox) {
            const double g = src[oy * ow + ox] * inv;
            for (int64_t dy = 0; dy < factor; ++dy) {
              double* row = dst + (oy * factor + dy) * w + ox * factor;
              for (int64_t dx = 0; dx < factor; ++dx) row[dx] += g;
            }
          }
        }
      }
    });
  }
  return y;
}

Tensor concat(const std::vector<Tensor>& xs, int64_t axis, Tape* tape) {
  if (xs.empty()) throw shape_error("concat: no inputs");
  const Shape& s0 = xs[0].shape();
  if (axis < 0 || axis >= static_cast<int64_t>(s0.size())) {
    throw shape_error("concat: axis out of range");
  }
  int64_t total = 0;
  for (const Tensor& t : xs) {
    if (t.rank() != xs[0].rank()) throw shape_error("concat: rank mismatch");
    for (int64_t i = 0; i < t.rank(); ++i) {
      if (i != axis && t.extent(i) != xs[0].extent(i)) {
        throw shape_error("concat: extent mismatch at axis " + std::to_string(i));
      }
    }
    total += t.extent(axis);
  }
  const AxisSplit sp = split_axis(s0, axis, "concat");
  Shape oshape = s0;
  oshape[static_cast<size_t>(axis)] = total;
  std::vector<double> out(static_cast<size_t>(sp.outer * total * sp.inner));
  for (int64_t o = 0; o < sp.outer; ++o) {
    int64_t off = 0;
    for (const Tensor& t : xs) {
      const int64_t n = t.extent(axis);
      const double* src = t.data().data() + o * n * sp.inner;
      double* dst = out.data() + (o * total + off) * sp.inner;
      std::copy(src, src + n * sp.inner, dst);
      off += n;
    }
  }
  Tensor y(std::move(oshape), std::move(out));
  if (tape) {
    tape->record([xs, y, sp, total](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      int64_t off = 0;
      for (const Tensor& xi : xs) {
        const int64_t ni = xi.size() / (sp.outer * sp.inner);
        auto& gx = t.grad_buffer(xi);
        for (int64_t o = 0; o < sp.outer; ++o) {
          const double* src = gy->data() + (o * total + off) * sp.inner;
          double* dst = gx.data() + o * ni * sp.inner;
          for (int64_t i = 0; i < ni * sp.inner; ++i) dst[i] += src[i];
        }
        off += ni;
      }
    });
  }
  return y;
}

Tensor reshape(const Tensor& x, Shape shape, Tape* tape) {
  if (shape_size(shape) != x.size()) {
    throw shape_error("reshape: size mismatch " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  Tensor y(std::move(shape), x.data());
  if (tape) {
    tape->record([x, y](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      auto& gx = t.grad_buffer(x);
      for (size_t i = 0; i < gy->size(); ++i) gx[i] += (*gy)[i];
    });
  }
  return y;
}

Tensor select0(const Tensor& x, int64_t i, Tape* tape) {
  if (x.rank() < 1) throw shape_error("select0: scalar input");
  const int64_t e0 = x.extent(0);
  if (i < 0 || i >= e0) throw shape_error("select0: index " + std::to_string(i) + " out of range");
  const int64_t slab = x.size() / e0;
  Shape oshape(x.shape().begin() + 1, x.shape().end());
  std::vector<double> out(x.data().begin() + i * slab, x.data().begin() + (i + 1) * slab);
  Tensor y(std::move(oshape), std::move(out));
  if (tape) {
    tape->record([x, y, i, slab](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      auto& gx = t.grad_buffer(x);
      double* dst = gx.data() + i * slab;
      for (int64_t j = 0; j < slab; ++j) dst[j] += (*gy)[static_cast<size_t>(j)];
    });
  }
  return y;
}

Tensor slice0(const Tensor& x, int64_t from, int64_t to, Tape* tape) {
  if (x.rank() < 1) throw shape_error("slice0: scalar input");
  const int64_t e0 = x.extent(0);
  if (from < 0 || from >= to || to > e0) throw shape_error("slice0: bad range");
  const int64_t slab = x.size() / e0;
  Shape oshape = x.shape();
  oshape[0] = to - from;
  std::vector<double> out(x.data().begin() + from * slab, x.data().begin() + to * slab);
  Tensor y(std::move(oshape), std::move(out));
  if (tape) {
    tape->record([x, y, from, slab](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      auto& gx = t.grad_buffer(x);
      double* dst = gx.data() + from * slab;
      for (size_t j = 0; j < gy->size(); ++j) dst[j] += (*gy)[j];
    });
  }
  return y;
}

Tensor sum_all(const Tensor& x, Tape* tape) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor y = Tensor::scalar(acc);
  if (tape) {
    tape->record([x, y](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      const double g = (*gy)[0];
      auto& gx = t.grad_buffer(x);
      for (double& v : gx) v += g;
    });
  }
  return y;
}

Tensor spatial_sum(const Tensor& x, Tape* tape) {
  check_rank(x, 3, "spatial_sum");
  const int64_t c = x.extent(0), p = x.extent(1) * x.extent(2);
  const auto& xd = x.data();
  std::vector<double> out(static_cast<size_t>(c), 0.0);
  for (int64_t ci = 0; ci < c; ++ci) {
    double acc = 0.0;
    const double* src = xd.data() + ci * p;
    for (int64_t j = 0; j < p; ++j) acc += src[j];
    out[static_cast<size_t>(ci)] = acc;
  }
  Tensor y(Shape{c}, std::move(out));
  if (tape) {
    tape->record([x, y, c, p](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      auto& gx = t.grad_buffer(x);
      for (int64_t ci = 0; ci < c; ++ci) {
        const double g = (*gy)[static_cast<size_t>(ci)];
        double* dst = gx.data() + ci * p;
        for (int64_t j = 0; j < p; ++j) dst[j] += g;
      }
    });
  }
  return y;
}

Tensor mul_spatial(const Tensor& x, const Tensor& m, Tape* tape) {
  check_rank(x, 3, "mul_spatial");
  check_rank(m, 2, "mul_spatial");
  const int64_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  if (m.extent(0) != h || m.extent(1) != w) {
    throw shape_error("mul_spatial: mask " + shape_str(m.shape()) + " vs input " +
                      shape_str(x.shape()));
  }
  const int64_t p = h * w;
  const auto& xd = x.data();
  const auto& md = m.data();
  std::vector<double> out(xd.size());
  for (int64_t ci = 0; ci < c; ++ci) {
    const double* src = xd.data() + ci * p;
    double* dst = out.data() + ci * p;
    for (int64_t j = 0; j < p; ++j) dst[j] = src[j] * md[static_cast<size_t>(j)];
  }
  Tensor y(x.shape(), std::move(out));
  if (tape) {
    tape->record([x, m, y, c, p](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      const auto& xd2 = x.data();
      const auto& md2 = m.data();
      {
        auto& gx = t.grad_buffer(x);
        for (int64_t ci = 0; ci < c; ++ci) {
          const double* gr = gy->data() + ci * p;
          double* dst = gx.data() + ci * p;
          for (int64_t j = 0; j < p; ++j) dst[j] += gr[j] * md2[static_cast<size_t>(j)];
        }
      }
      {
        auto& gm = t.grad_buffer(m);
        for (int64_t ci = 0; ci < c; ++ci) {
          const double* gr = gy->data() + ci * p;
          const double* xr = xd2.data() + ci * p;
          for (int64_t j = 0; j < p; ++j) gm[static_cast<size_t>(j)] += gr[j] * xr[j];
        }
      }
    });
  }
  return y;
}

Tensor colsum(const Tensor& x, Tape* tape) {
  check_rank(x, 2, "colsum");
  const int64_t n = x.extent(0), m = x.extent(1);
  const auto& xd = x.data();
  std::vector<double> out(static_cast<size_t>(m), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    const double* row = xd.data() + i * m;
    for (int64_t j = 0; j < m; ++j) out[static_cast<size_t>(j)] += row[j];
  }
  Tensor y(Shape{m}, std::move(out));
  if (tape) {
    tape->record([x, y, n, m](Tape& t) {
      const auto* gy = t.find_grad(y);
      if (!gy) return;
      auto& gx = t.grad_buffer(x);
      for (int64_t i = 0; i < n; ++i) {
        double* row = gx.data() + i * m;
        for (int64_t j = 0; j < m; ++j) row[j] += (*gy)[static_cast<size_t>(j)];
      }
    });
  }
  return y;
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            bool scale_by_sqrt_d, Tape* tape) {
  if (!k.defined() || !v.defined()) throw precondition_error("attention: empty key set");
  check_rank(q, 2, "attention");
  check_rank(k, 2, "attention");
  check_rank(v, 2, "attention");
  const int64_t d = q.extent(1);
  if (k.extent(1) != d) throw shape_error("attention: query/key dims disagree");
  if (k.extent(0) != v.extent(0)) throw shape_error("attention: key/value row counts disagree");
  Tensor scores = matmul(q, transpose2d(k, tape), tape);
  if (scale_by_sqrt_d) scores = scale(scores, 1.0 / std::sqrt(static_cast<double>(d)), tape);
  Tensor weights = softmax(scores, 1, tape);
  return matmul(weights, v, tape, /*canonical=*/true);
}

Tensor ffn(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
           const Tensor& b2, Tape* tape) {
  return linear(relu(linear(x, w1, b1, tape), tape), w2, b2, tape);
}

}  // namespace qmvos
