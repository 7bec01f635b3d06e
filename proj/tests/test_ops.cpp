#include <cmath>

#include "doctest.h"
#include "qmvos/error.hpp"
#include "qmvos/ops.hpp"
#include "qmvos/rng.hpp"

using namespace qmvos;

namespace {

Tensor randn(Shape shape, SplitMix64& rng) {
  std::vector<double> d(static_cast<size_t>(shape_size(shape)));
  for (double& v : d) v = rng.next_normal();
  return Tensor(std::move(shape), std::move(d));
}

bool approx_eq(const Tensor& a, const std::vector<double>& b, double tol) {
  if (static_cast<size_t>(a.size()) != b.size()) return false;
  for (size_t i = 0; i < b.size(); ++i) {
    if (std::abs(a.data()[i] - b[i]) > tol) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("softmax: symmetry, stability, frozen oracle") {
  // [0,0] -> [1/2, 1/2]
  Tensor even = softmax(Tensor({2}, {0.0, 0.0}), 0);
  CHECK(even.data()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(even.data()[1] == doctest::Approx(0.5).epsilon(1e-15));

  // Large magnitudes survive thanks to max subtraction.
  Tensor big = softmax(Tensor({3}, {1000.0, 1000.0, 1000.0}), 0);
  for (double v : big.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(big.all_finite());

  // exp/sum oracle values computed independently before the build.
  Tensor t = softmax(Tensor({3}, {1.0, 2.0, 3.0}), 0);
  CHECK(approx_eq(t, {0.09003057317038046, 0.24472847105479764, 0.6652409557748218}, 1e-15));
}

TEST_CASE("softmax rows sum to 1 within 1e-12 for |x| <= 1e3") {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> d(24);
    for (double& v : d) v = rng.uniform(-1e3, 1e3);
    Tensor y = softmax(Tensor({4, 6}, d), 1);
    for (int64_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (int64_t c = 0; c < 6; ++c) s += y.data()[static_cast<size_t>(r * 6 + c)];
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("softmax is exactly invariant under axis permutations") {
  SplitMix64 rng(12);
  Tensor x = randn({7}, rng);
  Tensor y = softmax(x, 0);
  // Reverse the entries, apply, un-reverse: bitwise identical.
  std::vector<double> rev(x.data().rbegin(), x.data().rend());
  Tensor yr = softmax(Tensor({7}, rev), 0);
  for (int i = 0; i < 7; ++i) {
    CHECK(y.data()[static_cast<size_t>(i)] == yr.data()[static_cast<size_t>(6 - i)]);
  }
}

TEST_CASE("softmax rejects a bad axis") {
  CHECK_THROWS_AS(softmax(Tensor::zeros({2, 2}), 2), shape_error);
}

TEST_CASE("layer_norm: constant rows, frozen oracle, affine collapse") {
  Tensor gamma = Tensor::full({2}, 1.0);
  Tensor beta = Tensor::zeros({2});

  Tensor constant = layer_norm(Tensor({2}, {3.0, 3.0}), gamma, beta);
  CHECK(constant.data()[0] == doctest::Approx(0.0).epsilon(1e-12));

  // Scalar normalization oracle for [1,-1] with eps = 1e-5.
  Tensor t = layer_norm(Tensor({2}, {1.0, -1.0}), gamma, beta);
  CHECK(approx_eq(t, {0.9999950000374997, -0.9999950000374997}, 1e-15));

  Tensor collapsed =
      layer_norm(Tensor({2, 2}, {5.0, -2.0, 0.5, 9.0}), Tensor::zeros({2}), Tensor::full({2}, 4.0));
  for (double v : collapsed.data()) CHECK(v == 4.0);

  CHECK_THROWS_AS(layer_norm(Tensor::zeros({2, 3}), gamma, beta), shape_error);
}

TEST_CASE("linear: identity, zero weight, matmul oracle") {
  Tensor x({2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor eye({2, 2}, {1.0, 0.0, 0.0, 1.0});
  Tensor zero_b = Tensor::zeros({2});
  CHECK(linear(x, eye, zero_b).data() == x.data());

  Tensor b({2}, {5.0, -1.0});
  Tensor broadcast = linear(x, Tensor::zeros({2, 2}), b);
  CHECK(approx_eq(broadcast, {5.0, -1.0, 5.0, -1.0}, 0.0));

  SplitMix64 rng(21);
  Tensor a = randn({2, 2}, rng);
  Tensor w = randn({2, 2}, rng);
  Tensor bias = randn({2}, rng);
  Tensor y = linear(a, w, bias);
  for (int64_t i = 0; i < 2; ++i) {
    for (int64_t j = 0; j < 2; ++j) {
      double expect = bias.data()[static_cast<size_t>(j)];
      for (int64_t k = 0; k < 2; ++k) {
        expect += a.data()[static_cast<size_t>(i * 2 + k)] * w.data()[static_cast<size_t>(k * 2 + j)];
      }
      CHECK(y.data()[static_cast<size_t>(i * 2 + j)] == doctest::Approx(expect).epsilon(1e-15));
    }
  }

  CHECK_THROWS_AS(linear(x, Tensor::zeros({3, 2}), zero_b), shape_error);
}

TEST_CASE("conv1x1: identity, spatial constancy, per-pixel matmul oracle") {
  SplitMix64 rng(22);
  Tensor x = randn({2, 2, 2}, rng);
  Tensor eye({2, 2}, {1.0, 0.0, 0.0, 1.0});
  CHECK(conv1x1(x, eye, Tensor::zeros({2})).data() == x.data());

  Tensor flat({2, 2, 2}, {3.0, 3.0, 3.0, 3.0, -1.0, -1.0, -1.0, -1.0});
  Tensor w = randn({3, 2}, rng);
  Tensor b = randn({3}, rng);
  Tensor yflat = conv1x1(flat, w, b);
  for (int64_t c = 0; c < 3; ++c) {
    const double first = yflat.data()[static_cast<size_t>(c * 4)];
    for (int64_t p = 1; p < 4; ++p) {
      CHECK(yflat.data()[static_cast<size_t>(c * 4 + p)] == first);
    }
  }

  Tensor y = conv1x1(x, w, b);
  for (int64_t co = 0; co < 3; ++co) {
    for (int64_t p = 0; p < 4; ++p) {
      double expect = b.data()[static_cast<size_t>(co)];
      for (int64_t ci = 0; ci < 2; ++ci) {
        expect += w.data()[static_cast<size_t>(co * 2 + ci)] * x.data()[static_cast<size_t>(ci * 4 + p)];
      }
      CHECK(y.data()[static_cast<size_t>(co * 4 + p)] == doctest::Approx(expect).epsilon(1e-14));
    }
  }

  CHECK_THROWS_AS(conv1x1(x, Tensor::zeros({3, 3}), Tensor::zeros({3})), shape_error);
}

TEST_CASE("conv1x1 commutes with spatial permutations") {
  SplitMix64 rng(23);
  Tensor x = randn({3, 2, 4}, rng);
  Tensor w = randn({2, 3}, rng);
  Tensor b = randn({2}, rng);
  Tensor y = conv1x1(x, w, b);

  // Rotate pixels by 3, apply, rotate output back: exact match.
  const int64_t p = 8, shift = 3;
  std::vector<double> xp(static_cast<size_t>(3 * p));
  for (int64_t c = 0; c < 3; ++c) {
    for (int64_t i = 0; i < p; ++i) {
      xp[static_cast<size_t>(c * p + (i + shift) % p)] = x.data()[static_cast<size_t>(c * p + i)];
    }
  }
  Tensor yp = conv1x1(Tensor({3, 2, 4}, xp), w, b);
  for (int64_t c = 0; c < 2; ++c) {
    for (int64_t i = 0; i < p; ++i) {
      CHECK(y.data()[static_cast<size_t>(c * p + i)] ==
            yp.data()[static_cast<size_t>(c * p + (i + shift) % p)]);
    }
  }
}

TEST_CASE("bilinear_upsample2x: constants, 1x1 replication, frozen ramp oracle") {
  Tensor c = bilinear_upsample2x(Tensor::full({1, 3, 3}, 2.5));
  for (double v : c.data()) CHECK(v == doctest::Approx(2.5).epsilon(1e-15));

  Tensor single = bilinear_upsample2x(Tensor({1, 1, 1}, {7.0}));
  CHECK(single.shape() == Shape{1, 2, 2});
  for (double v : single.data()) CHECK(v == 7.0);

  // Interpolation oracle computed independently before the build.
  Tensor ramp = bilinear_upsample2x(Tensor({1, 2, 2}, {0.0, 1.0, 2.0, 3.0}));
  const std::vector<double> expect = {0.0, 0.25, 0.75, 1.0,  0.5, 0.75, 1.25, 1.5,
                                      1.5, 1.75, 2.25, 2.5,  2.0, 2.25, 2.75, 3.0};
  CHECK(approx_eq(ramp, expect, 1e-15));
}

TEST_CASE("area_downsample averages blocks") {
  Tensor x({4, 4}, {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
  Tensor y = area_downsample(x, 2);
  CHECK(approx_eq(y, {1.0, 2.0, 3.0, 4.0}, 0.0));
  CHECK_THROWS_AS(area_downsample(Tensor::zeros({3, 3}), 2), shape_error);
}

TEST_CASE("scaled_dot_attention: degenerate softmax, uniform keys, explicit oracle") {
  SplitMix64 rng(24);
  // m = 1: the output equals the single value row no matter the query.
  Tensor q = randn({3, 2}, rng);
  Tensor k1 = randn({1, 2}, rng);
  Tensor v1({1, 4}, {1.0, -2.0, 0.5, 3.0});
  Tensor out1 = scaled_dot_attention(q, k1, v1, true);
  for (int64_t r = 0; r < 3; ++r) {
    for (int64_t c = 0; c < 4; ++c) {
      CHECK(out1.data()[static_cast<size_t>(r * 4 + c)] ==
            doctest::Approx(v1.data()[static_cast<size_t>(c)]).epsilon(1e-15));
    }
  }

  // Identical keys: column-wise mean of V.
  Tensor krep({3, 2}, {0.4, -0.7, 0.4, -0.7, 0.4, -0.7});
  Tensor v = randn({3, 2}, rng);
  Tensor mean_out = scaled_dot_attention(q, krep, v, false);
  for (int64_t r = 0; r < 3; ++r) {
    for (int64_t c = 0; c < 2; ++c) {
      const double expect = (v.data()[static_cast<size_t>(c)] + v.data()[static_cast<size_t>(2 + c)] +
                             v.data()[static_cast<size_t>(4 + c)]) /
                            3.0;
      CHECK(mean_out.data()[static_cast<size_t>(r * 2 + c)] == doctest::Approx(expect).epsilon(1e-13));
    }
  }

  // n = m = d = 2 against an explicit softmax-matmul oracle.
  Tensor q2({2, 2}, {0.3, -0.1, 1.2, 0.4});
  Tensor k2({2, 2}, {0.5, 0.9, -0.6, 0.2});
  Tensor v2({2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor got = scaled_dot_attention(q2, k2, v2, true);
  const double inv_sqrt_d = 1.0 / std::sqrt(2.0);
  for (int64_t i = 0; i < 2; ++i) {
    double s0 = 0.0, s1 = 0.0;
    s0 = (q2.data()[static_cast<size_t>(i * 2)] * 0.5 + q2.data()[static_cast<size_t>(i * 2 + 1)] * 0.9) *
         inv_sqrt_d;
    s1 = (q2.data()[static_cast<size_t>(i * 2)] * -0.6 + q2.data()[static_cast<size_t>(i * 2 + 1)] * 0.2) *
         inv_sqrt_d;
    const double m = std::max(s0, s1);
    const double e0 = std::exp(s0 - m), e1 = std::exp(s1 - m);
    const double a0 = e0 / (e0 + e1), a1 = e1 / (e0 + e1);
    CHECK(got.data()[static_cast<size_t>(i * 2)] == doctest::Approx(a0 * 1.0 + a1 * 3.0).epsilon(1e-14));
    CHECK(got.data()[static_cast<size_t>(i * 2 + 1)] ==
          doctest::Approx(a0 * 2.0 + a1 * 4.0).epsilon(1e-14));
  }

  CHECK_THROWS_AS(scaled_dot_attention(q2, Tensor{}, v2, true), precondition_error);
}

TEST_CASE("attention outputs stay in the convex envelope of V") {
  SplitMix64 rng(25);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor q = randn({4, 3}, rng);
    Tensor k = randn({6, 3}, rng);
    Tensor v = randn({6, 5}, rng);
    Tensor out = scaled_dot_attention(q, k, v, trial % 2 == 0);
    for (int64_t c = 0; c < 5; ++c) {
      double lo = v.data()[static_cast<size_t>(c)], hi = lo;
      for (int64_t r = 1; r < 6; ++r) {
        lo = std::min(lo, v.data()[static_cast<size_t>(r * 5 + c)]);
        hi = std::max(hi, v.data()[static_cast<size_t>(r * 5 + c)]);
      }
      for (int64_t r = 0; r < 4; ++r) {
        const double val = out.data()[static_cast<size_t>(r * 5 + c)];
        CHECK(val >= lo - 1e-12);
        CHECK(val <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("attention is exactly equivariant in Q's rows") {
  SplitMix64 rng(26);
  Tensor q = randn({4, 3}, rng);
  Tensor k = randn({5, 3}, rng);
  Tensor v = randn({5, 2}, rng);
  Tensor out = scaled_dot_attention(q, k, v, true);

  const std::vector<int64_t> perm = {2, 0, 3, 1};
  std::vector<double> qp(q.data().size());
  for (int64_t i = 0; i < 4; ++i) {
    for (int64_t j = 0; j < 3; ++j) {
      qp[static_cast<size_t>(i * 3 + j)] = q.data()[static_cast<size_t>(perm[static_cast<size_t>(i)] * 3 + j)];
    }
  }
  Tensor outp = scaled_dot_attention(Tensor({4, 3}, qp), k, v, true);
  for (int64_t i = 0; i < 4; ++i) {
    for (int64_t j = 0; j < 2; ++j) {
      CHECK(outp.data()[static_cast<size_t>(i * 2 + j)] ==
            out.data()[static_cast<size_t>(perm[static_cast<size_t>(i)] * 2 + j)]);
    }
  }
}

TEST_CASE("attention permuting K and V together is exactly invariant") {
  SplitMix64 rng(27);
  Tensor q = randn({3, 4}, rng);
  Tensor k = randn({6, 4}, rng);
  Tensor v = randn({6, 3}, rng);
  Tensor out = scaled_dot_attention(q, k, v, true);

  const std::vector<int64_t> perm = {5, 2, 0, 4, 1, 3};
  std::vector<double> kp(k.data().size()), vp(v.data().size());
  for (int64_t i = 0; i < 6; ++i) {
    for (int64_t j = 0; j < 4; ++j) {
      kp[static_cast<size_t>(i * 4 + j)] = k.data()[static_cast<size_t>(perm[static_cast<size_t>(i)] * 4 + j)];
    }
    for (int64_t j = 0; j < 3; ++j) {
      vp[static_cast<size_t>(i * 3 + j)] = v.data()[static_cast<size_t>(perm[static_cast<size_t>(i)] * 3 + j)];
    }
  }
  Tensor outp = scaled_dot_attention(q, Tensor({6, 4}, kp), Tensor({6, 3}, vp), true);
  CHECK(out.data() == outp.data());
}

TEST_CASE("ffn: zero input, ReLU kill, composition oracle") {
  Tensor zero = ffn(Tensor::zeros({2, 3}), Tensor::zeros({3, 4}), Tensor::zeros({4}),
                    Tensor::zeros({4, 2}), Tensor::zeros({2}));
  for (double v : zero.data()) CHECK(v == 0.0);

  // All pre-activations negative: only b2 survives.
  SplitMix64 rng(28);
  Tensor x = randn({2, 3}, rng);
  Tensor w1 = Tensor::zeros({3, 4});
  Tensor b1 = Tensor::full({4}, -5.0);
  Tensor w2 = randn({4, 2}, rng);
  Tensor b2({2}, {1.5, -0.5});
  Tensor killed = ffn(x, w1, b1, w2, b2);
  CHECK(approx_eq(killed, {1.5, -0.5, 1.5, -0.5}, 0.0));

  Tensor w1r = randn({3, 4}, rng);
  Tensor b1r = randn({4}, rng);
  Tensor composed = ffn(x, w1r, b1r, w2, b2);
  Tensor manual = linear(relu(linear(x, w1r, b1r)), w2, b2);
  CHECK(composed.data() == manual.data());
}

TEST_CASE("concat and slice round shapes correctly") {
  Tensor a = Tensor::full({2, 3}, 1.0);
  Tensor b = Tensor::full({1, 3}, 2.0);
  Tensor cat = concat({a, b}, 0);
  CHECK(cat.shape() == Shape{3, 3});
  CHECK(cat.data()[8] == 2.0);
  CHECK_THROWS_AS(concat({a, Tensor::zeros({1, 4})}, 0), shape_error);

  Tensor back = slice0(cat, 2, 3);
  CHECK(back.shape() == Shape{1, 3});
  CHECK(back.data()[0] == 2.0);
}
