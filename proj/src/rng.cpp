#include "tuckerdiff/rng.hpp"

#include <array>

namespace tucker {

namespace {

// SplitMix64 finalizer.
std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  const std::array<std::uint32_t, 2> words{static_cast<std::uint32_t>(seed),
                                           static_cast<std::uint32_t>(seed >> 32)};
  std::seed_seq seq(words.begin(), words.end());
  engine_.seed(seq);
}

Rng Rng::substream(Stream purpose, std::uint64_t index) const {
  return substream(purpose, index, 0);
}

Rng Rng::substream(Stream purpose, std::uint64_t index, std::uint64_t sub) const {
  std::uint64_t h = mix(seed_);
  h = mix(h ^ static_cast<std::uint64_t>(purpose));
  h = mix(h ^ index);
  h = mix(h ^ sub);
  return Rng(h);
}

double Rng::normal() { return normal_(engine_); }

double Rng::uniform() { return uniform_(engine_); }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }

}  // namespace tucker
