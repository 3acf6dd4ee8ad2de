#pragma once

#include <cstdint>
#include <random>

namespace evoscen {

/// SplitMix64 step; used to derive independent child seeds from a master seed.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for stream `index` derived from `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// Platform-stable random source. The standard distributions are
/// implementation-defined, so uniform and normal draws are built here
/// directly on the 64-bit Mersenne twister output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (one draw cached).
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace evoscen
