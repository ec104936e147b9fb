#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace phasedfl {

/// Deterministic 64-bit generator (splitmix64).
///
/// The <random> distributions are implementation-defined, so every draw the
/// simulator makes goes through this class instead; identical seeds produce
/// bit-identical runs on any platform and compiler.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Uniform integer in [0, n). Rejection sampling keeps the draw unbiased.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = ~0ull - ~0ull % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  /// Standard normal, Box-Muller cosine branch (no cached state).
  double next_normal() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t state_;
};

/// Independent seed for a named stream of one experiment seed; streams keep
/// data generation, weight init, partitioning and client selection decoupled.
inline std::uint64_t stream_seed(std::uint64_t base, std::uint64_t stream) {
  Rng mix(base ^ (stream * 0x9E3779B97F4A7C15ull));
  return mix.next_u64();
}

}  // namespace phasedfl
