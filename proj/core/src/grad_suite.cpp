#include "qmvos/grad_suite.hpp"

#include <cmath>

#include "qmvos/grad_check.hpp"
#include "qmvos/ops.hpp"
#include "qmvos/querymod.hpp"
#include "qmvos/rng.hpp"
#include "qmvos/segnet.hpp"

namespace qmvos {

namespace {

Tensor randn(Shape shape, SplitMix64& rng, double stddev = 1.0) {
  std::vector<double> d(static_cast<size_t>(shape_size(shape)));
  for (double& v : d) v = stddev * rng.next_normal();
  return Tensor(std::move(shape), std::move(d));
}

Tensor rand_uniform(Shape shape, SplitMix64& rng, double lo, double hi) {
  std::vector<double> d(static_cast<size_t>(shape_size(shape)));
  for (double& v : d) v = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(d));
}

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.ck = 3;
  cfg.cv = 4;
  cfg.cd = 3;
  cfg.c4 = 3;
  cfg.c8 = 4;
  cfg.c16 = 4;
  return cfg;
}

}  // namespace

std::vector<GradSuiteEntry> run_grad_suite(int instances_per_block) {
  std::vector<GradSuiteEntry> results;
  auto run_block = [&](const std::string& name,
                       const std::function<double(int)>& one_instance) {
    double worst = 0.0;
    for (int i = 0; i < instances_per_block; ++i) worst = std::max(worst, one_instance(i));
    results.push_back({name, worst});
  };

  run_block("linear", [](int i) {
    SplitMix64 rng(1000 + static_cast<uint64_t>(i));
    Tensor x = randn({3, 4}, rng);
    Tensor w = randn({4, 5}, rng);
    Tensor b = randn({5}, rng);
    if (i % 2 == 0) {
      return grad_check(
          [&](const Tensor& t, Tape* tape) { return sum_all(linear(t, w, b, tape), tape); }, x);
    }
    return grad_check(
        [&](const Tensor& t, Tape* tape) { return sum_all(linear(x, t, b, tape), tape); }, w);
  });

  run_block("conv1x1", [](int i) {
    SplitMix64 rng(2000 + static_cast<uint64_t>(i));
    Tensor x = randn({3, 3, 3}, rng);
    Tensor w = randn({4, 3}, rng);
    Tensor b = randn({4}, rng);
    if (i % 2 == 0) {
      return grad_check(
          [&](const Tensor& t, Tape* tape) { return sum_all(conv1x1(t, w, b, tape), tape); }, x);
    }
    return grad_check(
        [&](const Tensor& t, Tape* tape) { return sum_all(conv1x1(x, t, b, tape), tape); }, w);
  });

  run_block("layer_norm", [](int i) {
    SplitMix64 rng(3000 + static_cast<uint64_t>(i));
    Tensor x = randn({3, 5}, rng);
    Tensor gamma = rand_uniform({5}, rng, 0.5, 1.5);
    Tensor beta = randn({5}, rng, 0.3);
    // Square the output so the check is sensitive to more than the sum.
    auto f = [&](const Tensor& t, Tape* tape) {
      Tensor y = layer_norm(t, gamma, beta, tape);
      return sum_all(mul(y, y, tape), tape);
    };
    return grad_check(f, x);
  });

  run_block("softmax", [](int i) {
    SplitMix64 rng(4000 + static_cast<uint64_t>(i));
    Tensor x = randn({4, 5}, rng);
    Tensor probe = randn({4, 5}, rng);
    const int64_t axis = i % 2;
    auto f = [&](const Tensor& t, Tape* tape) {
      return sum_all(mul(softmax(t, axis, tape), probe, tape), tape);
    };
    return grad_check(f, x);
  });

  run_block("scaled_dot_attention", [](int i) {
    SplitMix64 rng(5000 + static_cast<uint64_t>(i));
    Tensor q = randn({3, 4}, rng);
    Tensor k = randn({5, 4}, rng);
    Tensor v = randn({5, 3}, rng);
    Tensor probe = randn({3, 3}, rng);
    const bool scaled = i % 2 == 0;
    auto f = [&](const Tensor& t, Tape* tape) {
      return sum_all(mul(scaled_dot_attention(t, k, v, scaled, tape), probe, tape), tape);
    };
    const double eq = grad_check(f, q);
    auto fk = [&](const Tensor& t, Tape* tape) {
      return sum_all(mul(scaled_dot_attention(q, t, v, scaled, tape), probe, tape), tape);
    };
    return std::max(eq, grad_check(fk, k));
  });

  run_block("ffn", [](int i) {
    SplitMix64 rng(6000 + static_cast<uint64_t>(i));
    Tensor x = randn({3, 4}, rng);
    Tensor w1 = randn({4, 8}, rng);
    Tensor b1 = randn({8}, rng, 0.2);
    Tensor w2 = randn({8, 4}, rng);
    Tensor b2 = randn({4}, rng, 0.2);
    if (i % 2 == 0) {
      return grad_check(
          [&](const Tensor& t, Tape* tape) { return sum_all(ffn(t, w1, b1, w2, b2, tape), tape); },
          x);
    }
    return grad_check(
        [&](const Tensor& t, Tape* tape) { return sum_all(ffn(x, w1, b1, t, b2, tape), tape); },
        w2);
  });

  const RunConfig tiny = tiny_config();

  // The composed blocks pair the output with a fixed random probe; a loss
  // linear in the block output keeps finite-difference cancellation noise
  // well under tolerance. Seeds are fixed away from ReLU kinks, which the
  // checker's smoothness precondition requires.
  run_block("sim_block", [&](int i) {
    SplitMix64 rng(7100 + static_cast<uint64_t>(i));
    ParamStore w = init_net_weights(tiny, 71 + static_cast<uint64_t>(i));
    Tensor x = randn({3, tiny.cv}, rng);
    Tensor probe = randn({3, tiny.cv}, rng);
    auto f = [&](const Tensor& t, Tape* tape) {
      ObjectQuerySet qs{t, std::vector<bool>(3, false)};
      Tensor y = sim_interact(qs, w, tiny, tape).q;
      return sum_all(mul(y, probe, tape), tape);
    };
    return grad_check(f, x);
  });

  run_block("qcim_block", [&](int i) {
    SplitMix64 rng(8000 + static_cast<uint64_t>(i));
    ParamStore w = init_net_weights(tiny, 80 + static_cast<uint64_t>(i));
    Tensor x = randn({2, tiny.cv}, rng);
    Tensor readout = randn({2, tiny.cv, 2, 2}, rng);
    Tensor probe = randn({2, tiny.cv}, rng);
    auto f = [&](const Tensor& t, Tape* tape) {
      ObjectQuerySet qs{t, std::vector<bool>(2, false)};
      Tensor y = qcim_refine(qs, readout, w, tiny, tape).q;
      return sum_all(mul(y, probe, tape), tape);
    };
    const double eq = grad_check(f, x);
    auto fr = [&](const Tensor& t, Tape* tape) {
      ObjectQuerySet qs{x, std::vector<bool>(2, false)};
      Tensor y = qcim_refine(qs, t, w, tiny, tape).q;
      return sum_all(mul(y, probe, tape), tape);
    };
    return std::max(eq, grad_check(fr, readout));
  });

  run_block("fuse_scales+init_queries", [&](int i) {
    SplitMix64 rng(9000 + static_cast<uint64_t>(i));
    ParamStore w = init_net_weights(tiny, 90 + static_cast<uint64_t>(i));
    Tensor f16 = randn({tiny.c16, 2, 2}, rng);
    Tensor f8 = randn({tiny.c8, 4, 4}, rng);
    Tensor masks = rand_uniform({2, 8, 8}, rng, 0.05, 0.95);
    Tensor probe = randn({2, tiny.cv}, rng);
    if (i % 2 == 0) {
      auto f = [&](const Tensor& t, Tape* tape) {
        Tensor fused = fuse_scales(t, f8, w, tiny, tape);
        return sum_all(mul(init_queries(fused, masks, tape).q, probe, tape), tape);
      };
      return grad_check(f, f16);
    }
    auto f = [&](const Tensor& t, Tape* tape) {
      Tensor fused = fuse_scales(f16, f8, w, tiny, tape);
      return sum_all(mul(init_queries(fused, t, tape).q, probe, tape), tape);
    };
    return grad_check(f, masks);
  });

  run_block("predict_masks", [&](int i) {
    SplitMix64 rng(10000 + static_cast<uint64_t>(i));
    ParamStore w = init_net_weights(tiny, 100 + static_cast<uint64_t>(i));
    Tensor queries = randn({2, tiny.cv}, rng);
    std::vector<Tensor> dec = {randn({tiny.cd, 3, 3}, rng), randn({tiny.cd, 3, 3}, rng)};
    Tensor probe = randn({3, 3, 3}, rng);
    auto f = [&](const Tensor& t, Tape* tape) {
      ObjectQuerySet qs{t, std::vector<bool>(2, false)};
      return sum_all(mul(predict_masks(dec, qs, w, tiny, tape), probe, tape), tape);
    };
    return grad_check(f, queries);
  });

  return results;
}

}  // namespace qmvos
