#include <cmath>

#include "doctest.h"
#include "qmvos/error.hpp"
#include "qmvos/grad_check.hpp"
#include "qmvos/membank.hpp"
#include "qmvos/ops.hpp"
#include "qmvos/rng.hpp"

using namespace qmvos;

namespace {

Tensor randn(Shape shape, SplitMix64& rng) {
  std::vector<double> d(static_cast<size_t>(shape_size(shape)));
  for (double& v : d) v = rng.next_normal();
  return Tensor(std::move(shape), std::move(d));
}

}  // namespace

TEST_CASE("memorization schedule") {
  CHECK(should_memorize(0, 5));
  CHECK(should_memorize(5, 5));
  CHECK(!should_memorize(3, 5));
  CHECK(should_memorize(0, 1));
  CHECK(should_memorize(7, 1));
  CHECK_THROWS_AS(should_memorize(4, 0), config_error);
  CHECK_THROWS_AS(should_memorize(-1, 5), precondition_error);
}

TEST_CASE("insert grows the bank in order and validates shapes") {
  MemoryBank bank(2, 3, 4);
  CHECK(bank.frame_count() == 0);
  SplitMix64 rng(41);
  Tensor k0 = randn({3, 2, 2}, rng);
  Tensor v0 = randn({2, 4, 2, 2}, rng);
  bank.insert(k0, v0);
  CHECK(bank.frame_count() == 1);
  Tensor k1 = randn({3, 2, 2}, rng);
  bank.insert(k1, randn({2, 4, 2, 2}, rng));
  CHECK(bank.frame_count() == 2);
  CHECK(bank.keys()[0].id() == k0.id());  // insertion order preserved
  CHECK(bank.keys()[1].id() == k1.id());

  CHECK_THROWS_AS(bank.insert(randn({4, 2, 2}, rng), v0), shape_error);
  CHECK_THROWS_AS(bank.insert(k0, randn({2, 5, 2, 2}, rng)), shape_error);
  CHECK_THROWS_AS(bank.insert(randn({3, 3, 3}, rng), randn({2, 4, 3, 3}, rng)), shape_error);
}

TEST_CASE("readout from an empty bank is a precondition error") {
  MemoryBank bank(1, 2, 2);
  SplitMix64 rng(42);
  CHECK_THROWS_AS(bank.readout(randn({2, 2, 2}, rng)), precondition_error);
}

TEST_CASE("identical keys make readout the spatial mean of values") {
  SplitMix64 rng(43);
  MemoryBank bank(1, 2, 3);
  Tensor key = Tensor::full({2, 2, 2}, 0.7);
  Tensor values = randn({1, 3, 2, 2}, rng);
  bank.insert(key, values);
  Tensor out = bank.readout(Tensor::full({2, 2, 2}, -1.3));
  for (int64_t c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (int64_t p = 0; p < 4; ++p) mean += values.data()[static_cast<size_t>(c * 4 + p)];
    mean /= 4.0;
    for (int64_t p = 0; p < 4; ++p) {
      CHECK(out.data()[static_cast<size_t>(c * 4 + p)] == doctest::Approx(mean).epsilon(1e-13));
    }
  }
}

TEST_CASE("constant values read out as that constant whatever the keys") {
  SplitMix64 rng(44);
  MemoryBank bank(2, 3, 2);
  bank.insert(randn({3, 2, 2}, rng), Tensor::full({2, 2, 2, 2}, 2.5));
  bank.insert(randn({3, 2, 2}, rng), Tensor::full({2, 2, 2, 2}, 2.5));
  Tensor out = bank.readout(randn({3, 2, 2}, rng));
  for (double v : out.data()) CHECK(v == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("T=1, two memory pixels, Ck=1: explicit softmax oracle") {
  // Keys [1, 2] on a 1x2 grid, query pixels [0.5, -0.5], one object with
  // values [10, 20]. Affinity at query q over memory pixel p is
  // softmax_p(q * k_p / sqrt(1)).
  MemoryBank bank(1, 1, 1);
  bank.insert(Tensor({1, 1, 2}, {1.0, 2.0}), Tensor({1, 1, 1, 2}, {10.0, 20.0}));
  Tensor out = bank.readout(Tensor({1, 1, 2}, {0.5, -0.5}));
  REQUIRE(out.shape() == Shape{1, 1, 1, 2});
  for (int q = 0; q < 2; ++q) {
    const double qv = q == 0 ? 0.5 : -0.5;
    const double s0 = qv * 1.0, s1 = qv * 2.0;
    const double m = std::max(s0, s1);
    const double e0 = std::exp(s0 - m), e1 = std::exp(s1 - m);
    const double expect = (e0 * 10.0 + e1 * 20.0) / (e0 + e1);
    CHECK(out.data()[static_cast<size_t>(q)] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("affinity rows sum to 1: readout of all-ones values is one") {
  SplitMix64 rng(45);
  MemoryBank bank(1, 4, 1);
  for (int t = 0; t < 3; ++t) {
    bank.insert(randn({4, 3, 3}, rng), Tensor::full({1, 1, 3, 3}, 1.0));
  }
  Tensor out = bank.readout(randn({4, 3, 3}, rng));
  for (double v : out.data()) CHECK(std::abs(v - 1.0) < 1e-12);
}

TEST_CASE("readout is exactly invariant to permuting memorized frames") {
  SplitMix64 rng(46);
  std::vector<Tensor> keys, vals;
  for (int t = 0; t < 4; ++t) {
    keys.push_back(randn({2, 2, 2}, rng));
    vals.push_back(randn({2, 3, 2, 2}, rng));
  }
  Tensor query = randn({2, 2, 2}, rng);

  MemoryBank fwd(2, 2, 3);
  for (int t = 0; t < 4; ++t) fwd.insert(keys[static_cast<size_t>(t)], vals[static_cast<size_t>(t)]);
  MemoryBank rev(2, 2, 3);
  for (int t = 3; t >= 0; --t) rev.insert(keys[static_cast<size_t>(t)], vals[static_cast<size_t>(t)]);

  CHECK(fwd.readout(query).data() == rev.readout(query).data());
}

TEST_CASE("per-object readout depends only on that object's value slab") {
  SplitMix64 rng(47);
  Tensor key = randn({2, 2, 2}, rng);
  Tensor query = randn({2, 2, 2}, rng);
  Tensor vals = randn({2, 3, 2, 2}, rng);

  MemoryBank a(2, 2, 3);
  a.insert(key, vals);
  Tensor out_a = a.readout(query);

  // Replace object 2's slab; object 1's readout must not move at all.
  std::vector<double> mutated = vals.data();
  for (size_t i = 12; i < 24; ++i) mutated[i] += 5.0;
  MemoryBank b(2, 2, 3);
  b.insert(key, Tensor({2, 3, 2, 2}, mutated));
  Tensor out_b = b.readout(query);

  for (size_t i = 0; i < 12; ++i) CHECK(out_a.data()[i] == out_b.data()[i]);
  CHECK(out_a.data()[12] != out_b.data()[12]);
}

TEST_CASE("permuting objects permutes readout slabs exactly") {
  SplitMix64 rng(48);
  Tensor key = randn({2, 2, 2}, rng);
  Tensor query = randn({2, 2, 2}, rng);
  Tensor vals = randn({3, 2, 2, 2}, rng);

  MemoryBank a(3, 2, 2);
  a.insert(key, vals);
  Tensor out = a.readout(query);

  const std::vector<int64_t> perm = {2, 0, 1};
  std::vector<double> permuted(vals.data().size());
  const int64_t slab = 2 * 2 * 2;
  for (int64_t n = 0; n < 3; ++n) {
    for (int64_t i = 0; i < slab; ++i) {
      permuted[static_cast<size_t>(n * slab + i)] =
          vals.data()[static_cast<size_t>(perm[static_cast<size_t>(n)] * slab + i)];
    }
  }
  MemoryBank b(3, 2, 2);
  b.insert(key, Tensor({3, 2, 2, 2}, permuted));
  Tensor out_p = b.readout(query);
  for (int64_t n = 0; n < 3; ++n) {
    for (int64_t i = 0; i < slab; ++i) {
      CHECK(out_p.data()[static_cast<size_t>(n * slab + i)] ==
            out.data()[static_cast<size_t>(perm[static_cast<size_t>(n)] * slab + i)]);
    }
  }
}

TEST_CASE("duplicating the memorized content leaves readout unchanged within 1e-10") {
  // Each stored pixel's softmax mass splits evenly over its copies, so a
  // bank holding two copies of the same entries reads out identically.
  SplitMix64 rng(49);
  Tensor k0 = randn({2, 2, 2}, rng);
  Tensor v0 = randn({1, 2, 2, 2}, rng);
  Tensor k1 = randn({2, 2, 2}, rng);
  Tensor v1 = randn({1, 2, 2, 2}, rng);
  Tensor query = randn({2, 2, 2}, rng);

  MemoryBank single(1, 2, 2);
  single.insert(k0, v0);
  MemoryBank single_dup(1, 2, 2);
  single_dup.insert(k0, v0);
  single_dup.insert(k0, v0);
  const Tensor sa = single.readout(query);
  const Tensor sb = single_dup.readout(query);
  for (size_t i = 0; i < sa.data().size(); ++i) {
    CHECK(std::abs(sa.data()[i] - sb.data()[i]) < 1e-10);
  }

  MemoryBank once(1, 2, 2);
  once.insert(k0, v0);
  once.insert(k1, v1);
  MemoryBank doubled(1, 2, 2);
  doubled.insert(k0, v0);
  doubled.insert(k1, v1);
  doubled.insert(k0, v0);
  doubled.insert(k1, v1);
  const Tensor a = once.readout(query);
  const Tensor b = doubled.readout(query);
  for (size_t i = 0; i < a.data().size(); ++i) {
    CHECK(std::abs(a.data()[i] - b.data()[i]) < 1e-10);
  }
}

TEST_CASE("readout stays within the envelope of stored values") {
  SplitMix64 rng(50);
  MemoryBank bank(1, 3, 2);
  std::vector<Tensor> stored;
  for (int t = 0; t < 3; ++t) {
    Tensor v = randn({1, 2, 2, 2}, rng);
    stored.push_back(v);
    bank.insert(randn({3, 2, 2}, rng), v);
  }
  Tensor out = bank.readout(randn({3, 2, 2}, rng));
  for (int64_t c = 0; c < 2; ++c) {
    double lo = 1e300, hi = -1e300;
    for (const Tensor& v : stored) {
      for (int64_t p = 0; p < 4; ++p) {
        lo = std::min(lo, v.data()[static_cast<size_t>(c * 4 + p)]);
        hi = std::max(hi, v.data()[static_cast<size_t>(c * 4 + p)]);
      }
    }
    for (int64_t p = 0; p < 4; ++p) {
      const double val = out.data()[static_cast<size_t>(c * 4 + p)];
      CHECK(val >= lo - 1e-12);
      CHECK(val <= hi + 1e-12);
    }
  }
}

TEST_CASE("L2 similarity prefers the nearest key") {
  // Two memory pixels with very different keys; with the L2 kernel the
  // query sitting exactly on key A reads out A's value almost exclusively.
  MemoryBank bank(1, 1, 1, MemSimilarity::kL2);
  bank.insert(Tensor({1, 1, 2}, {0.0, 6.0}), Tensor({1, 1, 1, 2}, {1.0, -1.0}));
  Tensor out = bank.readout(Tensor({1, 1, 2}, {0.0, 6.0}));
  CHECK(out.data()[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(out.data()[1] == doctest::Approx(-1.0).epsilon(1e-8));
  // Dot-product similarity on the same bank behaves differently for the
  // zero query pixel (zero dot product with every key).
  MemoryBank dot(1, 1, 1, MemSimilarity::kDot);
  dot.insert(Tensor({1, 1, 2}, {0.0, 6.0}), Tensor({1, 1, 1, 2}, {1.0, -1.0}));
  Tensor dout = dot.readout(Tensor({1, 1, 2}, {0.0, 6.0}));
  CHECK(dout.data()[0] == doctest::Approx(0.0).epsilon(1e-12));  // uniform mix of +1/-1
}

TEST_CASE("readout gradients flow through keys and values") {
  SplitMix64 rng(51);
  Tensor key = randn({2, 2, 2}, rng);
  Tensor vals = randn({1, 2, 2, 2}, rng);
  Tensor query = randn({2, 2, 2}, rng);
  Tape tape;
  MemoryBank bank(1, 2, 2);
  bank.insert(key, vals);
  Tensor out = bank.readout(query, &tape);
  tape.backward(sum_all(out, &tape));
  const Tensor gq = tape.grad(query);
  const Tensor gv = tape.grad(vals);
  bool nonzero_q = false, nonzero_v = false;
  for (double g : gq.data()) nonzero_q = nonzero_q || g != 0.0;
  for (double g : gv.data()) nonzero_v = nonzero_v || g != 0.0;
  CHECK(nonzero_q);
  CHECK(nonzero_v);
}

TEST_CASE("multi-frame readout gradients agree with finite differences") {
  // T = 2 exercises the stored-key concatenation path; both similarity
  // kernels are checked against central differences.
  for (MemSimilarity sim : {MemSimilarity::kDot, MemSimilarity::kL2}) {
    SplitMix64 rng(sim == MemSimilarity::kDot ? 52 : 53);
    Tensor k0 = randn({2, 2, 2}, rng);
    Tensor v0 = randn({2, 3, 2, 2}, rng);
    Tensor k1 = randn({2, 2, 2}, rng);
    Tensor v1 = randn({2, 3, 2, 2}, rng);
    Tensor query = randn({2, 2, 2}, rng);
    Tensor probe = randn({2, 3, 2, 2}, rng);

    auto through = [&](const Tensor& q, const Tensor& key0, const Tensor& val0, Tape* tape) {
      MemoryBank bank(2, 2, 3, sim);
      bank.insert(key0, val0);
      bank.insert(k1, v1);
      return sum_all(mul(bank.readout(q, tape), probe, tape), tape);
    };
    auto fq = [&](const Tensor& t, Tape* tape) { return through(t, k0, v0, tape); };
    CHECK(grad_check(fq, query) < 1e-5);
    auto fk = [&](const Tensor& t, Tape* tape) { return through(query, t, v0, tape); };
    CHECK(grad_check(fk, k0) < 1e-5);
    auto fv = [&](const Tensor& t, Tape* tape) { return through(query, k0, t, tape); };
    CHECK(grad_check(fv, v0) < 1e-5);
  }
}
