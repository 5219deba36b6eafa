#pragma once

#include <cstdint>

namespace kgad {

// SplitMix64: output i is a fixed bijective mix of (seed + (i+1) * golden
// gamma). Every stream in the project is derived from it so that datasets and
// frozen filter banks regenerate identically on every platform.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// Derives an independent seed for a named sub-stream (e.g. one sample of a run).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return SplitMix64::mix(base ^ SplitMix64::mix(stream + 0x632BE59BD9B4E019ULL));
}

}  // namespace kgad
