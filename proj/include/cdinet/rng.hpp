#pragma once

#include <cstdint>
#include <random>

namespace cdinet {

/// Deterministic RNG wrapper. The u64 -> double mapping is fixed to
/// (x >> 11) * 2^-53 so the same seed reproduces the same stream on any
/// platform or language port (std::uniform_real_distribution is
/// implementation-defined and deliberately avoided).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), n > 0.
  int uniform_int(int n) {
    return static_cast<int>(uniform() * n) % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace cdinet
