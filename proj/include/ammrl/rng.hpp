#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace ammrl {

// SplitMix64: 64-bit state, cheap to seed, so every swap order can carry its
// own reproducible stream.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Deterministic seed derived from a base seed and a list of stream labels.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> labels) {
  SplitMix64 mix(base);
  std::uint64_t out = mix();
  for (std::uint64_t label : labels) {
    SplitMix64 step(out ^ (label * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
    out = step();
  }
  return out;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  // Uniform over [0, n).
  std::uint64_t index(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  double exponential(double rate) { return std::exponential_distribution<double>(rate)(engine_); }
  bool bernoulli(double p) { return uniform() < p; }
  std::uint64_t bits() { return engine_(); }

 private:
  SplitMix64 engine_;
};

}  // namespace ammrl
