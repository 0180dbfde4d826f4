#pragma once

#include <cstdint>
#include <random>

namespace tucker {

// Purposes for substream derivation. Values are part of the reproducibility
// contract; do not renumber.
enum class Stream : std::uint64_t {
  kCoreDraw = 1,
  kNoiseDraw = 2,
  kNoiseField = 3,
  kLoadings = 4,
  kSplit = 5,
  kInit = 6,
  kShuffle = 7,
  kTrainSample = 8,
  kSampler = 9,
  kTest = 10,
};

/// Deterministic generator: std::mt19937_64 seeded through std::seed_seq.
/// Both algorithms are fixed by the C++ standard. Normal draws use
/// std::normal_distribution, whose algorithm is the toolchain's; streams are
/// reproducible for a given build.
///
/// substream() derives a new generator from this one's seed and a
/// (purpose, index, sub) key via SplitMix64 mixing, without touching this
/// generator's state. Per-sample work keyed this way produces identical
/// output on any number of threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  Rng substream(Stream purpose, std::uint64_t index) const;
  Rng substream(Stream purpose, std::uint64_t index, std::uint64_t sub) const;

  double normal();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  std::uint64_t next_u64() { return engine_(); }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace tucker
