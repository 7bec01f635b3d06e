#pragma once

#include <cstdint>
#include <string>

namespace qmvos {

enum class CrossSource { kReadout, kF16 };
enum class MemSimilarity { kDot, kL2 };

// Channel widths, memory schedule, ablation switches and training
// hyper-parameters. Round-trips through the line-based config file format.
struct RunConfig {
  int64_t ck = 32;   // memory key channels
  int64_t cv = 64;   // memory value / query channels
  int64_t cd = 32;   // decoder output channels
  int64_t c4 = 32;   // stride-4 feature channels
  int64_t c8 = 64;   // stride-8 feature channels
  int64_t c16 = 64;  // stride-16 feature channels

  int64_t mem_interval = 5;
  MemSimilarity mem_similarity = MemSimilarity::kDot;

  bool sim_interaction = true;     // self-attention across object queries
  CrossSource qcim_cross_source = CrossSource::kReadout;
  bool query_propagation = true;   // false: keep the first-frame queries
  bool qcim_attn_scale = false;    // 1/sqrt(d) in the QCIM cross-attention

  uint64_t seed = 0;
  double lr = 3e-4;
  double weight_decay = 1e-4;
  int64_t steps = 1000;
  int64_t seq_len = 8;

  void validate() const;  // throws config_error naming the offending field
};

// Line-based `key = value` file. Blank lines and lines starting with '#'
// are ignored; an unknown key is a config error.
RunConfig read_config(const std::string& path);
void write_config(const RunConfig& cfg, const std::string& path);
std::string config_to_string(const RunConfig& cfg);
RunConfig parse_config_text(const std::string& text);

}  // namespace qmvos
