#include <cmath>

#include "doctest.h"
#include "qmvos/error.hpp"
#include "qmvos/grad_check.hpp"
#include "qmvos/ops.hpp"
#include "qmvos/rng.hpp"
#include "qmvos/segnet.hpp"
#include "qmvos/weights_io.hpp"

#include <filesystem>

using namespace qmvos;

namespace {

Tensor randn(Shape shape, SplitMix64& rng) {
  std::vector<double> d(static_cast<size_t>(shape_size(shape)));
  for (double& v : d) v = rng.next_normal();
  return Tensor(std::move(shape), std::move(d));
}

Tensor rand_image(int64_t h, int64_t w, SplitMix64& rng) {
  std::vector<double> d(static_cast<size_t>(3 * h * w));
  for (double& v : d) v = rng.next_double();
  return Tensor(Shape{3, h, w}, std::move(d));
}

double variance(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return var / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("encode_frame shape contract across input sizes") {
  const RunConfig cfg;  // (c4, c8, c16) = (32, 64, 64)
  ParamStore w = init_net_weights(cfg, 1);
  SplitMix64 rng(81);
  for (int64_t side : {32, 64, 96, 128}) {
    const FeaturePyramid pyr = encode_frame(rand_image(side, side, rng), w, cfg);
    CHECK(pyr.f4.shape() == Shape{cfg.c4, side / 4, side / 4});
    CHECK(pyr.f8.shape() == Shape{cfg.c8, side / 8, side / 8});
    CHECK(pyr.f16.shape() == Shape{cfg.c16, side / 16, side / 16});
  }
  CHECK_THROWS_AS(encode_frame(rand_image(60, 64, rng), w, cfg), input_error);
  CHECK_THROWS_AS(encode_frame(Tensor::zeros({1, 64, 64}), w, cfg), input_error);
}

TEST_CASE("encode_frame is deterministic and non-degenerate") {
  const RunConfig cfg;
  ParamStore w = init_net_weights(cfg, 2);
  SplitMix64 rng(82);
  Tensor img = rand_image(64, 64, rng);
  const FeaturePyramid a = encode_frame(img, w, cfg);
  const FeaturePyramid b = encode_frame(img, w, cfg);
  CHECK(a.f4.data() == b.f4.data());
  CHECK(a.f8.data() == b.f8.data());
  CHECK(a.f16.data() == b.f16.data());

  CHECK(a.f4.all_finite());
  CHECK(a.f16.all_finite());
  CHECK(variance(a.f4.data()) > 0.0);
  CHECK(variance(a.f8.data()) > 0.0);
  CHECK(variance(a.f16.data()) > 0.0);
}

TEST_CASE("encode_mask: shape, sensitivity to the mask, determinism") {
  const RunConfig cfg;
  ParamStore w = init_net_weights(cfg, 3);
  SplitMix64 rng(83);
  Tensor img = rand_image(64, 64, rng);

  Tensor mask_a = Tensor::zeros({1, 64, 64});
  std::vector<double> mb(static_cast<size_t>(64 * 64), 0.0);
  for (int64_t i = 0; i < 32 * 64; ++i) mb[static_cast<size_t>(i)] = 1.0;
  Tensor mask_b({1, 64, 64}, mb);

  Tensor va = encode_mask(img, mask_a, w, cfg);
  CHECK(va.shape() == Shape{cfg.cv, 4, 4});

  Tensor vb = encode_mask(img, mask_b, w, cfg);
  CHECK(va.data() != vb.data());

  Tensor vb2 = encode_mask(img, mask_b, w, cfg);
  CHECK(vb.data() == vb2.data());

  CHECK_THROWS_AS(encode_mask(img, Tensor::zeros({1, 32, 32}), w, cfg), input_error);
}

TEST_CASE("decode: shape contract, zero propagation, determinism") {
  const RunConfig cfg;
  ParamStore w = init_net_weights(cfg, 4);
  SplitMix64 rng(84);
  Tensor img = rand_image(64, 64, rng);
  const FeaturePyramid pyr = encode_frame(img, w, cfg);

  Tensor readout = randn({cfg.cv, 4, 4}, rng);
  Tensor dec = decode(readout, pyr, w, cfg);
  CHECK(dec.shape() == Shape{cfg.cd, 16, 16});

  Tensor dec2 = decode(readout, pyr, w, cfg);
  CHECK(dec.data() == dec2.data());

  // Zero readout and zero skip features with zero biases stay zero.
  FeaturePyramid zero_pyr;
  zero_pyr.f4 = Tensor::zeros({cfg.c4, 16, 16});
  zero_pyr.f8 = Tensor::zeros({cfg.c8, 8, 8});
  zero_pyr.f16 = Tensor::zeros({cfg.c16, 4, 4});
  Tensor zdec = decode(Tensor::zeros({cfg.cv, 4, 4}), zero_pyr, w, cfg);
  for (double v : zdec.data()) CHECK(v == 0.0);

  CHECK_THROWS_AS(decode(randn({cfg.cv, 8, 8}, rng), pyr, w, cfg), input_error);
  CHECK_THROWS_AS(decode(randn({cfg.cv + 1, 4, 4}, rng), pyr, w, cfg), input_error);
}

TEST_CASE("predict_masks: zero queries, shape contract, 1-pixel dot oracle") {
  const RunConfig cfg;
  ParamStore w = init_net_weights(cfg, 5);
  SplitMix64 rng(85);

  // Zero query: the projection bias is zero so the filter and logits
  // vanish, and softmax over the N+1 channels is uniform.
  std::vector<Tensor> dec = {randn({cfg.cd, 4, 4}, rng), randn({cfg.cd, 4, 4}, rng)};
  ObjectQuerySet zero{Tensor::zeros({2, cfg.cv}), {false, false}};
  Tensor logits = predict_masks(dec, zero, w, cfg);
  CHECK(logits.shape() == Shape{3, 4, 4});
  for (double v : logits.data()) CHECK(v == 0.0);
  Tensor probs = softmax(logits, 0);
  for (double v : probs.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  // 1-pixel case against an explicit projected-dot oracle.
  Tensor q = randn({1, cfg.cv}, rng);
  Tensor feat = randn({cfg.cd, 1, 1}, rng);
  Tensor one = predict_masks({feat}, ObjectQuerySet{q, {false}}, w, cfg);
  CHECK(one.shape() == Shape{2, 1, 1});
  CHECK(one.data()[0] == 0.0);  // background channel pinned to zero
  const Tensor& pw = w.get("head.proj.w");
  const Tensor& pb = w.get("head.proj.b");
  double expect = 0.0;
  for (int64_t j = 0; j < cfg.cd; ++j) {
    double f = pb.data()[static_cast<size_t>(j)];
    for (int64_t i = 0; i < cfg.cv; ++i) {
      f += q.data()[static_cast<size_t>(i)] * pw.data()[static_cast<size_t>(i * cfg.cd + j)];
    }
    expect += f * feat.data()[static_cast<size_t>(j)];
  }
  CHECK(one.data()[1] == doctest::Approx(expect).epsilon(1e-13));

  CHECK_THROWS_AS(predict_masks({}, zero, w, cfg), contract_error);
  CHECK_THROWS_AS(predict_masks(dec, ObjectQuerySet{q, {false}}, w, cfg), contract_error);
}

TEST_CASE("predict_masks shape contract on a 64x64 frame") {
  const RunConfig cfg;
  ParamStore w = init_net_weights(cfg, 12);
  SplitMix64 rng(87);
  const FeaturePyramid pyr = encode_frame(rand_image(64, 64, rng), w, cfg);
  std::vector<Tensor> dec = {decode(randn({cfg.cv, 4, 4}, rng), pyr, w, cfg),
                             decode(randn({cfg.cv, 4, 4}, rng), pyr, w, cfg)};
  ObjectQuerySet qs{randn({2, cfg.cv}, rng), {false, false}};
  CHECK(predict_masks(dec, qs, w, cfg).shape() == Shape{3, 16, 16});
}

TEST_CASE("gradients flow to queries and decoder weights through prediction") {
  const RunConfig cfg;
  ParamStore w = init_net_weights(cfg, 6);
  SplitMix64 rng(86);
  Tensor img = rand_image(32, 32, rng);
  const FeaturePyramid pyr = encode_frame(img, w, cfg);
  Tensor readout = randn({cfg.cv, 2, 2}, rng);
  Tensor queries = randn({1, cfg.cv}, rng);

  auto f_query = [&](const Tensor& t, Tape* tape) {
    Tensor dec = decode(readout, pyr, w, cfg, tape);
    ObjectQuerySet qs{t, {false}};
    return sum_all(predict_masks({dec}, qs, w, cfg, tape), tape);
  };
  CHECK(grad_check(f_query, queries) < 1e-5);

  auto f_weight = [&](const Tensor& t, Tape* tape) {
    ParamStore local = w;
    local.set("dec.out.w", t);
    Tensor dec = decode(readout, pyr, local, cfg, tape);
    ObjectQuerySet qs{queries, {false}};
    return sum_all(predict_masks({dec}, qs, local, cfg, tape), tape);
  };
  CHECK(grad_check(f_weight, w.get("dec.out.w")) < 1e-5);
}

TEST_CASE("net weights save/load round-trips bitwise") {
  const RunConfig cfg;
  ParamStore w = init_net_weights(cfg, 7);
  const std::string path =
      (std::filesystem::temp_directory_path() / "qmvos_net_roundtrip.qmvw").string();
  save_weights(w, path);
  ParamStore back = load_weights(path);
  CHECK(back.count() == w.count());
  for (const auto& [name, t] : w.items()) {
    CHECK(back.get(name).shape() == t.shape());
    CHECK(back.get(name).data() == t.data());
  }
  std::filesystem::remove(path);
}

TEST_CASE("weight init is deterministic per seed") {
  const RunConfig cfg;
  ParamStore a = init_net_weights(cfg, 42);
  ParamStore b = init_net_weights(cfg, 42);
  ParamStore c = init_net_weights(cfg, 43);
  CHECK(a.get("enc.c1.w").data() == b.get("enc.c1.w").data());
  CHECK(a.get("qcim.ca.wk").data() == b.get("qcim.ca.wk").data());
  CHECK(a.get("enc.c1.w").data() != c.get("enc.c1.w").data());
}
