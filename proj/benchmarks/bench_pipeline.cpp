#include <benchmark/benchmark.h>

#include "qmvos/membank.hpp"
#include "qmvos/pipeline.hpp"
#include "qmvos/rng.hpp"
#include "qmvos/synth.hpp"

using namespace qmvos;

namespace {

struct PipelineFixture {
  RunConfig cfg;
  SynthVideo video;
  std::vector<Tensor> frames;
  ParamStore weights;

  PipelineFixture()
      : video(gen_synthetic(0, 2, 6, 64, 64, Scenario::kSimilar)),
        weights(init_net_weights(cfg, 0)) {
    for (const RgbImage& f : video.frames) frames.push_back(image_to_tensor(f));
  }
};

PipelineFixture& fixture() {
  static PipelineFixture f;
  return f;
}

}  // namespace

static void BM_EncodeFrame(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode_frame(f.frames[0], f.weights, f.cfg));
  }
}
BENCHMARK(BM_EncodeFrame);

static void BM_MemoryReadout(benchmark::State& state) {
  auto& f = fixture();
  FeaturePyramid pyr = encode_frame(f.frames[0], f.weights, f.cfg);
  Tensor key = compute_key(pyr.f16, f.weights, f.cfg);
  MemoryBank bank(2, f.cfg.ck, f.cfg.cv);
  Tensor masks = labels_to_soft_masks(f.video.masks[0], 2);
  SplitMix64 rng(3);
  std::vector<double> vals(static_cast<size_t>(2 * f.cfg.cv * 4 * 4));
  for (double& v : vals) v = rng.next_normal();
  for (int t = 0; t < 4; ++t) bank.insert(key, Tensor({2, f.cfg.cv, 4, 4}, vals));
  for (auto _ : state) {
    benchmark::DoNotOptimize(bank.readout(key));
  }
}
BENCHMARK(BM_MemoryReadout);

static void BM_QueryModules(benchmark::State& state) {
  auto& f = fixture();
  FeaturePyramid pyr = encode_frame(f.frames[0], f.weights, f.cfg);
  Tensor masks = labels_to_soft_masks(f.video.masks[0], 2);
  SplitMix64 rng(4);
  std::vector<double> vals(static_cast<size_t>(2 * f.cfg.cv * 4 * 4));
  for (double& v : vals) v = rng.next_normal();
  Tensor readout({2, f.cfg.cv, 4, 4}, vals);
  for (auto _ : state) {
    ObjectQuerySet q = propagate_queries(pyr, masks, f.weights, f.cfg);
    benchmark::DoNotOptimize(qcim_refine(q, readout, f.weights, f.cfg));
  }
}
BENCHMARK(BM_QueryModules);

static void BM_SegmentVideo(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(segment_video(f.frames, f.video.masks[0], f.weights, f.cfg));
  }
}
BENCHMARK(BM_SegmentVideo);

BENCHMARK_MAIN();
