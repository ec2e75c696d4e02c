#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace saplma {

// Seeded random source. The engine is std::mt19937_64, whose output sequence
// is fixed by the standard; the distributions below are written out here
// because the std:: distributions are implementation-defined and would make
// datasets and trained models differ between standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_index(std::uint64_t bound) {
    // Rejection on the top partial block keeps the draw exactly uniform.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t draw;
    do {
      draw = engine_();
    } while (draw >= limit);
    return draw % bound;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller (one value per call, second discarded).
  double normal() {
    constexpr double two_pi = 6.283185307179586476925286766559;
    double u1;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

private:
  std::mt19937_64 engine_;
};

} // namespace saplma
