#pragma once

#include <vector>

#include "qmvos/config.hpp"
#include "qmvos/tape.hpp"
#include "qmvos/tensor.hpp"

namespace qmvos {

// True iff frame_idx lands on the memorization schedule (frame 0 always
// does). interval must be >= 1.
bool should_memorize(int64_t frame_idx, int64_t interval);

// Keys and per-object values of the memorized frames, in insertion order.
// One bank per video; readout is a pure read, insertion needs exclusive
// access.
class MemoryBank {
 public:
  MemoryBank(int64_t object_count, int64_t key_channels, int64_t value_channels,
             MemSimilarity similarity = MemSimilarity::kDot);

  // key: Ck x H x W; values: N x Cv x H x W. Shapes are pinned by the first
  // insertion.
  void insert(const Tensor& key, const Tensor& values);

  // Affinity-weighted blend of the stored values for every query pixel.
  // Affinities are a softmax over all T*H*W memory pixels of the similarity
  // between the query key and the stored keys. Returns N x Cv x H x W.
  Tensor readout(const Tensor& query_key, Tape* tape = nullptr) const;

  int64_t frame_count() const { return static_cast<int64_t>(keys_.size()); }
  int64_t object_count() const { return object_count_; }
  const std::vector<Tensor>& keys() const { return keys_; }
  const std::vector<Tensor>& values() const { return values_; }

 private:
  int64_t object_count_;
  int64_t key_channels_;
  int64_t value_channels_;
  MemSimilarity similarity_;
  std::vector<Tensor> keys_;
  std::vector<Tensor> values_;
};

}  // namespace qmvos
