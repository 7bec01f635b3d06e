#include "qmvos/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "qmvos/error.hpp"
#include "qmvos/image_io.hpp"
#include "qmvos/ops.hpp"
#include "qmvos/rng.hpp"

namespace qmvos {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void check_frames(const std::vector<Tensor>& frames, const LabelMap& first_mask) {
  if (frames.empty()) throw input_error("segment_video: no frames");
  const int64_t h = frames[0].extent(1), w = frames[0].extent(2);
  for (const Tensor& f : frames) {
    if (f.rank() != 3 || f.extent(0) != 3 || f.extent(1) != h || f.extent(2) != w) {
      throw input_error("segment_video: frames must all be 3xHxW with equal extents");
    }
  }
  if (first_mask.h != h || first_mask.w != w) {
    throw input_error("segment_video: first mask extents do not match the frames");
  }
}

int validated_object_count(const LabelMap& first_mask) {
  const int n = first_mask.max_label();
  if (n < 1) throw input_error("first mask references no objects");
  std::vector<int64_t> counts(static_cast<size_t>(n) + 1, 0);
  for (uint8_t v : first_mask.v) ++counts[v];
  for (int i = 1; i <= n; ++i) {
    if (counts[static_cast<size_t>(i)] == 0) {
      throw input_error("first mask is missing object " + std::to_string(i));
    }
  }
  return n;
}

// Memory values for one frame: each object's soft mask through the mask
// encoder, stacked to N x Cv x H/16 x W/16.
Tensor encode_values(const Tensor& frame, const Tensor& soft_masks, const ParamStore& w,
                     const RunConfig& cfg, Tape* tape) {
  const int64_t n = soft_masks.extent(0);
  std::vector<Tensor> slabs;
  slabs.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    Tensor value = encode_mask(frame, select0(soft_masks, i, tape), w, cfg, tape);
    slabs.push_back(reshape(value, {1, cfg.cv, value.extent(1), value.extent(2)}, tape));
  }
  return slabs.size() == 1 ? slabs[0] : concat(slabs, 0, tape);
}

// Readout-or-f16 content for the query refinement, as an Nx C x H x W slab
// stack (f16 becomes a single slab).
Tensor qcim_content(const Tensor& readout, const FeaturePyramid& pyr, const RunConfig& cfg,
                    Tape* tape) {
  if (cfg.qcim_cross_source == CrossSource::kReadout) return readout;
  return reshape(pyr.f16, {1, cfg.c16, pyr.f16.extent(1), pyr.f16.extent(2)}, tape);
}

Tensor upsample4x(const Tensor& x, Tape* tape) {
  return bilinear_upsample2x(bilinear_upsample2x(x, tape), tape);
}

struct FrameOutputs {
  Tensor logits;      // (N+1) x H/4 x W/4
  Tensor probs_full;  // (N+1) x H x W
};

// One predicted frame: encode, read memory, refine queries, decode each
// object, predict. Used by both inference and training; timings optional.
FrameOutputs predict_frame(const Tensor& frame, const MemoryBank& bank,
                           const ObjectQuerySet& queries, const ParamStore& w,
                           const RunConfig& cfg, bool baseline_head, Tape* tape,
                           StageTimings* timings, Tensor* key_out, FeaturePyramid* pyr_out) {
  auto t0 = Clock::now();
  FeaturePyramid pyr = encode_frame(frame, w, cfg, tape);
  Tensor key = compute_key(pyr.f16, w, cfg, tape);
  if (timings) timings->encode_ms += ms_since(t0);

  t0 = Clock::now();
  Tensor readout = bank.readout(key, tape);
  if (timings) timings->readout_ms += ms_since(t0);

  const int64_t n = bank.object_count();
  Tensor filters;
  if (!baseline_head) {
    t0 = Clock::now();
    ObjectQuerySet refined = qcim_refine(queries, qcim_content(readout, pyr, cfg, tape), w, cfg, tape);
    filters = project_queries(refined, w, tape);
    if (timings) timings->querymod_ms += ms_since(t0);
  }

  t0 = Clock::now();
  std::vector<Tensor> dec_feats;
  dec_feats.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    dec_feats.push_back(decode(select0(readout, i, tape), pyr, w, cfg, tape));
  }
  if (timings) timings->decode_ms += ms_since(t0);

  t0 = Clock::now();
  FrameOutputs out;
  if (baseline_head) {
    out.logits = predict_masks_static(dec_feats, w, cfg, tape);
  } else {
    out.logits = apply_filters(dec_feats, filters, cfg, tape);
  }
  out.probs_full = upsample4x(softmax(out.logits, 0, tape), tape);
  if (timings) timings->predict_ms += ms_since(t0);

  if (key_out) *key_out = key;
  if (pyr_out) *pyr_out = pyr;
  return out;
}

SegResult run_video(const std::vector<Tensor>& frames, const LabelMap& first_mask,
                    const ParamStore& w, const RunConfig& cfg, bool baseline_head) {
  cfg.validate();
  check_frames(frames, first_mask);
  const int n = validated_object_count(first_mask);

  SegResult result;
  result.num_objects = n;
  MemoryBank bank(n, cfg.ck, cfg.cv, cfg.mem_similarity);

  // Frame 0 is never predicted: adopt the annotation, seed memory and queries.
  result.labels.push_back(first_mask);
  result.probs.push_back(labels_to_probs(first_mask, n));
  Tensor soft_masks = labels_to_soft_masks(first_mask, n);

  FeaturePyramid pyr = encode_frame(frames[0], w, cfg, nullptr);
  Tensor key = compute_key(pyr.f16, w, cfg, nullptr);
  bank.insert(key, encode_values(frames[0], soft_masks, w, cfg, nullptr));

  ObjectQuerySet queries;
  if (!baseline_head) queries = propagate_queries(pyr, soft_masks, w, cfg, nullptr);

  for (size_t t = 1; t < frames.size(); ++t) {
    Tensor frame_key;
    FeaturePyramid frame_pyr;
    FrameOutputs out = predict_frame(frames[t], bank, queries, w, cfg, baseline_head, nullptr,
                                     &result.timings, &frame_key, &frame_pyr);
    result.probs.push_back(out.probs_full);
    result.labels.push_back(probs_to_labels(out.probs_full));

    auto t0 = Clock::now();
    if (should_memorize(static_cast<int64_t>(t), cfg.mem_interval)) {
      Tensor pred_masks = slice0(out.probs_full, 1, n + 1, nullptr);
      bank.insert(frame_key, encode_values(frames[t], pred_masks, w, cfg, nullptr));
    }
    result.timings.memorize_ms += ms_since(t0);

    if (!baseline_head && cfg.query_propagation) {
      t0 = Clock::now();
      Tensor pred_masks = slice0(out.probs_full, 1, n + 1, nullptr);
      queries = propagate_queries(frame_pyr, pred_masks, w, cfg, nullptr);
      result.timings.querymod_ms += ms_since(t0);
    }
    ++result.timings.frames_timed;
  }
  return result;
}

}  // namespace

Tensor labels_to_soft_masks(const LabelMap& map, int num_objects) {
  const int64_t p = map.h * map.w;
  std::vector<double> data(static_cast<size_t>(num_objects * p), 0.0);
  for (int64_t i = 0; i < p; ++i) {
    const int label = map.v[static_cast<size_t>(i)];
    if (label >= 1 && label <= num_objects) {
      data[static_cast<size_t>((label - 1) * p + i)] = 1.0;
    }
  }
  return Tensor(Shape{num_objects, map.h, map.w}, std::move(data));
}

Tensor labels_to_probs(const LabelMap& map, int num_objects) {
  const int64_t p = map.h * map.w;
  std::vector<double> data(static_cast<size_t>((num_objects + 1) * p), 0.0);
  for (int64_t i = 0; i < p; ++i) {
    int label = map.v[static_cast<size_t>(i)];
    if (label > num_objects) label = 0;
    data[static_cast<size_t>(label * p + i)] = 1.0;
  }
  return Tensor(Shape{num_objects + 1, map.h, map.w}, std::move(data));
}

LabelMap probs_to_labels(const Tensor& probs) {
  if (probs.rank() != 3) throw shape_error("probs_to_labels: expected CxHxW");
  const int64_t c = probs.extent(0), h = probs.extent(1), w = probs.extent(2), p = h * w;
  LabelMap map(h, w);
  const auto& d = probs.data();
  for (int64_t i = 0; i < p; ++i) {
    int best = 0;
    double best_v = d[static_cast<size_t>(i)];
    for (int64_t ch = 1; ch < c; ++ch) {
      const double v = d[static_cast<size_t>(ch * p + i)];
      if (v > best_v) {
        best_v = v;
        best = static_cast<int>(ch);
      }
    }
    map.v[static_cast<size_t>(i)] = static_cast<uint8_t>(best);
  }
  return map;
}

ObjectQuerySet propagate_queries(const FeaturePyramid& pyr, const Tensor& soft_masks,
                                 const ParamStore& w, const RunConfig& cfg, Tape* tape) {
  Tensor fused = fuse_scales(pyr.f16, pyr.f8, w, cfg, tape);
  ObjectQuerySet init = init_queries(fused, soft_masks, tape);
  return sim_interact(init, w, cfg, tape);
}

SegResult segment_video(const std::vector<Tensor>& frames, const LabelMap& first_mask,
                        const ParamStore& w, const RunConfig& cfg) {
  return run_video(frames, first_mask, w, cfg, /*baseline_head=*/false);
}

TrainStats train_toy(const std::vector<SynthVideo>& videos, ParamStore& w, const RunConfig& cfg) {
  cfg.validate();
  if (videos.empty()) throw input_error("train_toy: no videos");
  if (cfg.seq_len < 2) throw config_error("train_toy: seq_len must be >= 2");
  for (const SynthVideo& v : videos) {
    if (v.masks.size() != v.frames.size()) throw input_error("train_toy: video missing masks");
  }

  // Sampling stream is salted so it never collides with weight init draws.
  SplitMix64 sampler(cfg.seed ^ 0xA0761FE2C8E5E5E5ULL);
  const AdamWConfig opt{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  TrainStats stats;

  for (int64_t step = 0; step < cfg.steps; ++step) {
    const SynthVideo& video = videos[sampler.next_below(videos.size())];
    const int64_t n_frames = static_cast<int64_t>(video.frames.size());
    if (cfg.seq_len > n_frames) {
      std::cerr << "train_toy: skipping step " << step << " (clip length " << cfg.seq_len
                << " exceeds video length " << n_frames << ")\n";
      continue;
    }
    const int64_t start = static_cast<int64_t>(sampler.next_below(
        static_cast<uint64_t>(n_frames - cfg.seq_len + 1)));
    const int n = video.n_objects;

    Tape tape;
    MemoryBank bank(n, cfg.ck, cfg.cv, cfg.mem_similarity);

    Tensor frame0 = image_to_tensor(video.frames[static_cast<size_t>(start)]);
    Tensor gt0 = labels_to_soft_masks(video.masks[static_cast<size_t>(start)], n);
    FeaturePyramid pyr = encode_frame(frame0, w, cfg, &tape);
    bank.insert(compute_key(pyr.f16, w, cfg, &tape),
                encode_values(frame0, gt0, w, cfg, &tape));
    ObjectQuerySet queries = propagate_queries(pyr, gt0, w, cfg, &tape);

    Tensor loss;
    for (int64_t rel = 1; rel < cfg.seq_len; ++rel) {
      const size_t abs = static_cast<size_t>(start + rel);
      Tensor frame = image_to_tensor(video.frames[abs]);
      Tensor frame_key;
      FeaturePyramid frame_pyr;
      FrameOutputs out = predict_frame(frame, bank, queries, w, cfg, /*baseline_head=*/false,
                                       &tape, nullptr, &frame_key, &frame_pyr);

      // Soft targets: the one-hot ground truth area-pooled to stride 4.
      Tensor target = area_downsample(labels_to_probs(video.masks[abs], n), 4, nullptr);
      const double inv_pixels =
          1.0 / static_cast<double>(out.logits.extent(1) * out.logits.extent(2));
      Tensor ce = scale(sum_all(mul(target, log_softmax(out.logits, 0, &tape), &tape), &tape),
                        -inv_pixels, &tape);
      loss = loss.defined() ? add(loss, ce, &tape) : ce;

      if (should_memorize(rel, cfg.mem_interval)) {
        Tensor pred_masks = slice0(out.probs_full, 1, n + 1, &tape);
        bank.insert(frame_key, encode_values(frame, pred_masks, w, cfg, &tape));
      }
      if (cfg.query_propagation && rel + 1 < cfg.seq_len) {
        Tensor pred_masks = slice0(out.probs_full, 1, n + 1, &tape);
        queries = propagate_queries(frame_pyr, pred_masks, w, cfg, &tape);
      }
    }
    loss = scale(loss, 1.0 / static_cast<double>(cfg.seq_len - 1), &tape);
    tape.backward(loss);
    adamw_step(w, collect_grads(w, tape), opt);
    stats.loss_curve.push_back(loss.value());
  }
  return stats;
}

OverheadReport bench_overhead(const std::vector<Tensor>& frames, const LabelMap& first_mask,
                              const ParamStore& w, const RunConfig& cfg, bool include_baseline) {
  run_video(frames, first_mask, w, cfg, false);  // warm-up, untimed
  const SegResult timed = run_video(frames, first_mask, w, cfg, false);
  const StageTimings& t = timed.timings;
  if (t.frames_timed == 0) throw input_error("bench_overhead: need at least two frames");

  OverheadReport rep;
  rep.frames = t.frames_timed;
  const double inv = 1.0 / static_cast<double>(t.frames_timed);
  rep.encode_ms = t.encode_ms * inv;
  rep.readout_ms = t.readout_ms * inv;
  rep.querymod_ms = t.querymod_ms * inv;
  rep.decode_ms = t.decode_ms * inv;
  rep.predict_ms = t.predict_ms * inv;
  rep.memorize_ms = t.memorize_ms * inv;
  rep.per_frame_ms = t.total_ms() * inv;
  rep.querymod_share = t.total_ms() > 0.0 ? t.querymod_ms / t.total_ms() : 0.0;

  if (include_baseline) {
    run_video(frames, first_mask, w, cfg, true);  // warm-up
    const SegResult base = run_video(frames, first_mask, w, cfg, true);
    rep.has_baseline = true;
    rep.baseline_per_frame_ms =
        base.timings.total_ms() / static_cast<double>(base.timings.frames_timed);
    rep.baseline_querymod_share =
        base.timings.total_ms() > 0.0 ? base.timings.querymod_ms / base.timings.total_ms() : 0.0;
  }
  return rep;
}

std::string overhead_to_json(const OverheadReport& report) {
  nlohmann::ordered_json j;
  j["frames"] = report.frames;
  j["per_frame_ms"] = report.per_frame_ms;
  j["stages_ms"] = {
      {"encode", report.encode_ms},     {"readout", report.readout_ms},
      {"querymod", report.querymod_ms}, {"decode", report.decode_ms},
      {"predict", report.predict_ms},   {"memorize", report.memorize_ms},
  };
  j["querymod_share"] = report.querymod_share;
  if (report.has_baseline) {
    j["baseline_per_frame_ms"] = report.baseline_per_frame_ms;
    j["baseline_querymod_share"] = report.baseline_querymod_share;
  }
  return j.dump(2) + "\n";
}

}  // namespace qmvos
