#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace freeent {

/// Counter-based generator: output k of a stream is a SplitMix64 finalizer
/// applied to key + k * golden-gamma. Streams are identified by their key;
/// fork() derives child keys so that (experiment seed, chain id, ...) maps
/// to a reproducible stream independent of scheduling order.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : key_(mix(mix(seed) ^ (stream * kStreamMul + kGamma))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + (++counter_) * kGamma); }

  /// Independent child stream; does not advance this stream.
  [[nodiscard]] CounterRng fork(std::uint64_t id) const {
    CounterRng child;
    child.key_ = mix(key_ ^ mix(id * kStreamMul + 0x632BE59BD9B4E019ULL));
    return child;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via the polar Box-Muller method; caches the spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire's nearly-divisionless reduction.
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t x = (*this)();
      const __uint128_t m = static_cast<__uint128_t>(x) * n;
      if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::uint64_t>(m >> 64);
    }
  }

  [[nodiscard]] std::uint64_t key() const { return key_; }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kStreamMul = 0xD1B54A32D192ED03ULL;

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace freeent
