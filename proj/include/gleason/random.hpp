#pragma once

#include <cstdint>
#include <numeric>
#include <span>

namespace gleason {

/// SplitMix64: small, fast and bit-reproducible across standard libraries,
/// unlike the std:: distributions.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  std::uint64_t operator()() { return next(); }
  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return ~std::uint64_t{0}; }
  using result_type = std::uint64_t;

  /// Uniform in [0, 1).
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * double(n)); }

  std::size_t categorical(std::span<const double> probabilities) {
    const double total = std::accumulate(probabilities.begin(), probabilities.end(), 0.0);
    double u = uniform() * total;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
      if (u < probabilities[i]) return i;
      u -= probabilities[i];
    }
    return probabilities.size() - 1;
  }

 private:
  std::uint64_t state_;
};

}  // namespace gleason
