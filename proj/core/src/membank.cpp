#include "qmvos/membank.hpp"

#include <cmath>

#include "qmvos/error.hpp"
#include "qmvos/ops.hpp"

namespace qmvos {

bool should_memorize(int64_t frame_idx, int64_t interval) {
  if (interval <= 0) throw config_error("memorization interval must be >= 1");
  if (frame_idx < 0) throw precondition_error("negative frame index");
  return frame_idx % interval == 0;
}

MemoryBank::MemoryBank(int64_t object_count, int64_t key_channels, int64_t value_channels,
                       MemSimilarity similarity)
    : object_count_(object_count),
      key_channels_(key_channels),
      value_channels_(value_channels),
      similarity_(similarity) {
  if (object_count < 1) throw config_error("memory bank needs at least one object");
  if (key_channels < 1 || value_channels < 1) throw config_error("channel widths must be >= 1");
}

void MemoryBank::insert(const Tensor& key, const Tensor& values) {
  if (key.rank() != 3 || key.extent(0) != key_channels_) {
    throw shape_error("memory key " + shape_str(key.shape()) + ", expected " +
                      std::to_string(key_channels_) + "xHxW");
  }
  if (values.rank() != 4 || values.extent(0) != object_count_ ||
      values.extent(1) != value_channels_) {
    throw shape_error("memory values " + shape_str(values.shape()) + ", expected " +
                      std::to_string(object_count_) + "x" + std::to_string(value_channels_) +
                      "xHxW");
  }
  if (values.extent(2) != key.extent(1) || values.extent(3) != key.extent(2)) {
    throw shape_error("memory key and value spatial extents disagree");
  }
  if (!keys_.empty() &&
      (key.extent(1) != keys_[0].extent(1) || key.extent(2) != keys_[0].extent(2))) {
    throw shape_error("memory entries must share spatial extents");
  }
  keys_.push_back(key);
  values_.push_back(values);
}

Tensor MemoryBank::readout(const Tensor& query_key, Tape* tape) const {
  if (keys_.empty()) throw precondition_error("readout from an empty memory bank");
  if (query_key.rank() != 3 || query_key.extent(0) != key_channels_) {
    throw shape_error("query key " + shape_str(query_key.shape()) + ", expected " +
                      std::to_string(key_channels_) + "xHxW");
  }
  const int64_t h = keys_[0].extent(1), wd = keys_[0].extent(2);
  if (query_key.extent(1) != h || query_key.extent(2) != wd) {
    throw shape_error("query key spatial extents do not match the bank");
  }
  const int64_t hw = h * wd;
  const int64_t t_frames = frame_count();

  // Stored keys side by side: Ck x (T*H*W).
  std::vector<Tensor> key_cols;
  key_cols.reserve(static_cast<size_t>(t_frames));
  for (const Tensor& k : keys_) key_cols.push_back(reshape(k, {key_channels_, hw}, tape));
  Tensor mem_keys = key_cols.size() == 1 ? key_cols[0] : concat(key_cols, 1, tape);

  Tensor q = transpose2d(reshape(query_key, {key_channels_, hw}, tape), tape);  // HW x Ck
  const double inv_temp = 1.0 / std::sqrt(static_cast<double>(key_channels_));
  Tensor scores;
  if (similarity_ == MemSimilarity::kDot) {
    scores = scale(matmul(q, mem_keys, tape), inv_temp, tape);
  } else {
    // -|q - k|^2 = 2 q.k - |k|^2 - |q|^2; the |q|^2 term is constant per
    // row and drops out of the softmax.
    Tensor dots = scale(matmul(q, mem_keys, tape), 2.0 * inv_temp, tape);
    Tensor knorm = colsum(mul(mem_keys, mem_keys, tape), tape);
    scores = add_rowvec(dots, scale(knorm, -inv_temp, tape), tape);
  }
  Tensor affinity_t = transpose2d(softmax(scores, 1, tape), tape);  // (T*H*W) x HW

  std::vector<Tensor> slabs;
  slabs.reserve(static_cast<size_t>(object_count_));
  for (int64_t n = 0; n < object_count_; ++n) {
    std::vector<Tensor> val_cols;
    val_cols.reserve(static_cast<size_t>(t_frames));
    for (const Tensor& v : values_) {
      val_cols.push_back(reshape(select0(v, n, tape), {value_channels_, hw}, tape));
    }
    Tensor mem_vals = val_cols.size() == 1 ? val_cols[0] : concat(val_cols, 1, tape);
    Tensor out = matmul(mem_vals, affinity_t, tape, /*canonical=*/true);  // Cv x HW
    slabs.push_back(reshape(out, {1, value_channels_, h, wd}, tape));
  }
  return slabs.size() == 1 ? slabs[0] : concat(slabs, 0, tape);
}

}  // namespace qmvos
