#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>

namespace octfluid {

// Every random draw in the library comes from an Rng built by derive_rng().
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard; the conversions below avoid the implementation-defined
// std::*_distribution classes so results match across standard libraries.
//
// A component's stream is seeded with splitmix64(global_seed + offset), where
// offset = stream tag * 2^32 + index, so any module can be rerun in isolation.
enum class Stream : std::uint64_t {
  Phantom = 1,
  NetInit = 2,
  Dropout = 3,
  Augment = 4,
  Batch = 5,
  Forest = 6,
  Folds = 7,
  Test = 99,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] (inclusive), rejection sampled.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1ULL;
    if (span == 0) return static_cast<std::int64_t>(engine_());
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % span);
    std::uint64_t r = engine_();
    while (r >= limit) r = engine_();
    return lo + static_cast<std::int64_t>(r % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <class It>
  void shuffle(It first, It last) {
    const auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
      const auto j = uniform_int(0, i);
      using std::swap;
      swap(first[i], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

inline Rng derive_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  const std::uint64_t offset = (static_cast<std::uint64_t>(stream) << 32U) + index;
  return Rng(splitmix64(seed + offset));
}

inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return splitmix64(seed + ((static_cast<std::uint64_t>(stream) << 32U) + index));
}

}  // namespace octfluid
