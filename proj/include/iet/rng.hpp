#pragma once

#include <cmath>
#include <cstdint>

namespace iet {

// SplitMix64-based generator. Self-contained so that seeded runs are
// bit-reproducible across standard library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller (fresh pair every call, no cached state).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // Normal with std `sigma`, rejection-truncated to [-2 sigma, 2 sigma].
  double trunc_normal(double sigma) {
    for (;;) {
      double v = normal();
      if (v >= -2.0 && v <= 2.0) return v * sigma;
    }
  }

 private:
  uint64_t state_;
};

}  // namespace iet
