#pragma once

#include <vector>

#include "qmvos/tape.hpp"
#include "qmvos/tensor.hpp"

namespace qmvos {

// Differentiable tensor operations. Every op validates shapes, computes the
// forward value, and (when a tape is given) records a backward step.
//
// Determinism rules:
//  - Reductions run in a fixed row-major, sequential order, so repeated runs
//    are bitwise identical.
//  - softmax sums its exponentials in ascending value order. The result is
//    therefore exactly invariant under permutations of the reduced axis.
//  - matmul has a `canonical` mode that sums each output element's products
//    in ascending value order; attention uses it for the weighted sum over
//    value rows so that permuting (K, V) rows permutes nothing and permuting
//    query rows permutes outputs bit-exactly.

Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor scale(const Tensor& a, double c, Tape* tape = nullptr);

// Multiply by a single-element tensor (gradient flows into both factors).
Tensor scale_by(const Tensor& a, const Tensor& s, Tape* tape = nullptr);
Tensor reciprocal(const Tensor& a, Tape* tape = nullptr);
Tensor relu(const Tensor& a, Tape* tape = nullptr);

// y[i,j] = x[i,j] + v[j]
Tensor add_rowvec(const Tensor& x, const Tensor& v, Tape* tape = nullptr);

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr, bool canonical = false);
Tensor transpose2d(const Tensor& a, Tape* tape = nullptr);

// y = x W + b with x: n x k, W: k x m, b: m.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b, Tape* tape = nullptr);

Tensor softmax(const Tensor& x, int64_t axis, Tape* tape = nullptr);
Tensor log_softmax(const Tensor& x, int64_t axis, Tape* tape = nullptr);

// Normalizes the last axis to zero mean / unit variance (eps = 1e-5) before
// the affine transform. gamma and beta match the last-axis extent.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tape* tape = nullptr);

// Per-pixel linear map. x: C x H x W, w: C' x C, b: C'.
Tensor conv1x1(const Tensor& x, const Tensor& w, const Tensor& b, Tape* tape = nullptr);

// Cross-correlation. x: C x H x W, w: C' x C x kh x kw, b: C'.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int64_t stride, int64_t pad,
              Tape* tape = nullptr);

// Doubles both spatial extents, align-corners-false, edges replicated.
Tensor bilinear_upsample2x(const Tensor& x, Tape* tape = nullptr);

// Mean over factor x factor blocks. x is H x W or C x H x W; spatial extents
// must divide by factor.
Tensor area_downsample(const Tensor& x, int64_t factor, Tape* tape = nullptr);

Tensor concat(const std::vector<Tensor>& xs, int64_t axis, Tape* tape = nullptr);
Tensor reshape(const Tensor& x, Shape shape, Tape* tape = nullptr);

// Selects index i along the first axis, dropping that axis.
Tensor select0(const Tensor& x, int64_t i, Tape* tape = nullptr);

// Keeps rows [from, to) of the first axis.
Tensor slice0(const Tensor& x, int64_t from, int64_t to, Tape* tape = nullptr);

Tensor sum_all(const Tensor& x, Tape* tape = nullptr);

// x: C x H x W -> {C}, summing each channel's pixels.
Tensor spatial_sum(const Tensor& x, Tape* tape = nullptr);

// y[c,h,w] = x[c,h,w] * m[h,w]
Tensor mul_spatial(const Tensor& x, const Tensor& m, Tape* tape = nullptr);

// Column sums of a 2-D tensor: {m} from n x m.
Tensor colsum(const Tensor& x, Tape* tape = nullptr);

// Softmax(Q K^T [/ sqrt(d)]) V with Q: n x d, K: m x d, V: m x dv.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            bool scale_by_sqrt_d, Tape* tape = nullptr);

// linear -> ReLU -> linear.
Tensor ffn(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
           const Tensor& b2, Tape* tape = nullptr);

}  // namespace qmvos
