#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>

#include "cvit/crypto.hpp"

namespace cvit {

/// Platform-independent sampling on top of SplitMix64. Standard-library
/// distributions are implementation-defined, which would break cross-build
/// reproducibility of initial weights.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_.next(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_.next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; the second variate is discarded to keep the stream simple.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Normal(0, std) resampled until within ±2 std.
  double truncated_normal(double std) {
    for (;;) {
      const double z = normal();
      if (std::abs(z) <= 2.0) return z * std;
    }
  }

  std::size_t below(std::size_t bound) { return static_cast<std::size_t>(gen_.next() % bound); }

  template <typename U>
  void shuffle(std::span<U> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  SplitMix64 gen_;
};

}  // namespace cvit
