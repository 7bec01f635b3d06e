#pragma once

#include <cmath>
#include <cstdint>

namespace qmvos {

// SplitMix64: 64-bit counter-based generator (Steele, Lea, Flood 2014).
// The state advances by a fixed odd constant and the counter is mixed
// through two xor-shift-multiply rounds. Chosen because the sequence is
// trivially reproducible in any language from the seed alone, which keeps
// synthetic data and weight initialization byte-identical across ports.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1): top 53 bits scaled by 2^-53.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n). n must be > 0. Simple modulo; the bias is
  // negligible for the small n used here and keeps the recipe portable.
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller on two uniforms. The first uniform is
  // nudged away from zero so log() stays finite.
  double next_normal() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

 private:
  uint64_t state_;
};

}  // namespace qmvos
