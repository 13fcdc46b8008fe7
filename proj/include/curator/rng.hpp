#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace curator {

/// SplitMix64: a 64-bit counter-based generator. Every output is a pure
/// integer function of (state, counter), so sequences are identical on every
/// platform and compiler. Substreams are derived by mixing a key into the seed.
class SplitMix64 {
 public:
  static constexpr std::string_view kAlgorithm = "splitmix64";

  using result_type = std::uint64_t;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  explicit constexpr SplitMix64(std::uint64_t seed) : state_(seed) {}

  /// Independent stream for (seed, key), e.g. (seed, resample index).
  static constexpr SplitMix64 substream(std::uint64_t seed, std::uint64_t key) {
    return SplitMix64(mix(seed ^ mix(key + 0x632BE59BD9B4E019ULL)));
  }

  constexpr result_type operator()() { return next(); }

  constexpr std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  /// Uniform integer in [0, bound) by rejection; integer-only, unbiased.
  constexpr std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  /// Uniform double in [0, 1) with 53 random bits.
  constexpr double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  constexpr bool bernoulli(double p) { return uniform() < p; }

 private:
  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

/// Draws `count` distinct indices from [0, n) via a partial Fisher-Yates shuffle.
/// The result is in draw order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, SplitMix64& rng) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  if (count > n) count = n;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace curator
