#pragma once

#include <vector>

#include "qmvos/config.hpp"
#include "qmvos/label_map.hpp"
#include "qmvos/membank.hpp"
#include "qmvos/param_store.hpp"
#include "qmvos/segnet.hpp"
#include "qmvos/synth.hpp"

namespace qmvos {

// Wall-clock totals over the predicted frames (frame 0 is bootstrap and is
// not timed). querymod covers scale fusion, query init, both interaction
// blocks and the query-to-filter projection.
struct StageTimings {
  double encode_ms = 0.0;
  double readout_ms = 0.0;
  double querymod_ms = 0.0;
  double decode_ms = 0.0;
  double predict_ms = 0.0;
  double memorize_ms = 0.0;
  int64_t frames_timed = 0;

  double total_ms() const {
    return encode_ms + readout_ms + querymod_ms + decode_ms + predict_ms + memorize_ms;
  }
};

struct SegResult {
  int num_objects = 0;
  std::vector<LabelMap> labels;
  std::vector<Tensor> probs;  // per frame, (N+1) x H x W, channel 0 = background
  StageTimings timings;
};

// Runs the sequential loop over a video: frame 0 adopts the annotation
// verbatim and seeds the memory and the queries; every later frame is
// encoded, read out from memory, query-refined, decoded per object and
// predicted; frames on the memorization schedule are stored with their
// predicted soft masks; with query propagation on, the queries are then
// re-initialized from this frame's features and predictions.
SegResult segment_video(const std::vector<Tensor>& frames, const LabelMap& first_mask,
                        const ParamStore& w, const RunConfig& cfg);

// fuse_scales -> init_queries -> sim_interact on one frame's pyramid and
// soft masks; the query set the next frame starts from.
ObjectQuerySet propagate_queries(const FeaturePyramid& pyr, const Tensor& soft_masks,
                                 const ParamStore& w, const RunConfig& cfg, Tape* tape = nullptr);

struct TrainStats {
  std::vector<double> loss_curve;  // one entry per executed step
};

// Teacher-forced clip training: each step samples a clip of cfg.seq_len
// consecutive frames, bootstraps frame 0 from ground truth, accumulates the
// per-pixel cross-entropy of frames 1..seq_len-1 at stride 4, and applies
// one AdamW step. Clips longer than a video are skipped with a warning.
TrainStats train_toy(const std::vector<SynthVideo>& videos, ParamStore& w, const RunConfig& cfg);

struct OverheadReport {
  int64_t frames = 0;  // predicted frames per pass
  double per_frame_ms = 0.0;
  double encode_ms = 0.0;
  double readout_ms = 0.0;
  double querymod_ms = 0.0;
  double decode_ms = 0.0;
  double predict_ms = 0.0;
  double memorize_ms = 0.0;
  double querymod_share = 0.0;  // querymod fraction of per-frame time
  bool has_baseline = false;
  double baseline_per_frame_ms = 0.0;   // static head, query modules bypassed
  double baseline_querymod_share = 0.0; // stays 0: the modules never run
};

// Times a full inference pass after one untimed warm-up pass. With
// include_baseline, also measures the pipeline with the query modules
// bypassed and the static prediction head in their place.
OverheadReport bench_overhead(const std::vector<Tensor>& frames, const LabelMap& first_mask,
                              const ParamStore& w, const RunConfig& cfg, bool include_baseline);

std::string overhead_to_json(const OverheadReport& report);

// One-hot soft masks (N x H x W) and class probabilities ((N+1) x H x W)
// from a label map with objects 1..N.
Tensor labels_to_soft_masks(const LabelMap& map, int num_objects);
Tensor labels_to_probs(const LabelMap& map, int num_objects);
LabelMap probs_to_labels(const Tensor& probs);

}  // namespace qmvos
