#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace age {

// Seeded 64-bit generator with platform-independent conversions.
//
// std::normal_distribution and friends are implementation-defined, so the
// uniform and Gaussian transforms are written out here: uniforms take the top
// 53 bits of one mt19937_64 draw, Gaussians use the Box-Muller transform and
// cache the second variate.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform index in [0, n); n must be positive.
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }

  double normal();

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent stream seed from a base seed and a stream tag
// (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace age
