#pragma once

#include <cstdint>
#include <vector>

#include "qmvos/error.hpp"

namespace qmvos {

// H x W map of object labels, 0 = background. Stored as bytes, which also
// pins what the PGM mask files can carry.
struct LabelMap {
  int64_t h = 0;
  int64_t w = 0;
  std::vector<uint8_t> v;

  LabelMap() = default;
  LabelMap(int64_t height, int64_t width)
      : h(height), w(width), v(static_cast<size_t>(height * width), 0) {}

  uint8_t at(int64_t y, int64_t x) const { return v[static_cast<size_t>(y * w + x)]; }
  uint8_t& at(int64_t y, int64_t x) { return v[static_cast<size_t>(y * w + x)]; }

  int max_label() const {
    int m = 0;
    for (uint8_t b : v) m = std::max(m, static_cast<int>(b));
    return m;
  }

  bool operator==(const LabelMap& o) const { return h == o.h && w == o.w && v == o.v; }
};

}  // namespace qmvos
