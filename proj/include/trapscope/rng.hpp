#pragma once

#include <cstdint>

namespace trapscope::rng {

inline constexpr std::uint64_t default_seed = 0xC0FFEE;

// Counter-based generator built on the SplitMix64 output function
// (Steele, Lea & Flood 2014). Every draw is a pure function of
// (seed, counter), so a sample's random numbers never depend on which
// worker produced it or in what order.
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t seed) noexcept
      : key_(splitmix64_mix(seed ^ 0x6A09E667F3BCC909ULL)) {}

  constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
    return splitmix64_mix(key_ + (counter + 1) * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  constexpr double uniform(std::uint64_t counter) const noexcept {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Draw `k` of sample `index` when each sample consumes `stride` draws.
  constexpr double uniform(std::uint64_t index, unsigned k,
                           unsigned stride) const noexcept {
    return uniform(index * stride + k);
  }

 private:
  std::uint64_t key_;
};

}  // namespace trapscope::rng
