#pragma once

// Deterministic random streams for the simulator. Each (seed, index, tag)
// triple names an independent SplitMix64 stream, so per-term work can run in
// any order (or in parallel) without changing output.

#include <cmath>
#include <cstdint>

namespace factsurv {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
public:
  explicit Rng(std::uint64_t state) : state_(state) {}

  static Rng stream(std::uint64_t seed, std::uint64_t index, std::uint64_t tag) {
    std::uint64_t s = mix64(seed + 0x9E3779B97F4A7C15ULL * (index + 1));
    return Rng(mix64(s ^ mix64(tag)));
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Box-Muller; consumes exactly two uniforms per call.
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01(); // zero would blow up the log
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double lognormal(double log_mean, double log_sd) {
    return std::exp(log_mean + log_sd * normal());
  }

  // Uniform integer in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound) {
    std::uint64_t threshold = (~bound + 1) % bound; // 2^64 mod bound
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

private:
  std::uint64_t state_;
};

} // namespace factsurv
