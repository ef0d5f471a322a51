#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace leap {

// Deterministic random draws on top of std::mt19937_64. The engine sequence
// is pinned by the standard; the distributions below are implemented here
// because std::uniform_real_distribution and friends are not bit-portable
// across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(engine_() % span);
  }

  // Standard normal via Box-Muller (no cached spare, so draws stay
  // independent of call interleaving).
  double gauss() {
    double u1 = unit();
    while (u1 <= 0.0) u1 = unit();
    const double u2 = unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Normal truncated at k standard deviations, by rejection.
  double gauss_truncated(double sigma, double k = 3.0) {
    if (sigma <= 0.0) return 0.0;
    for (;;) {
      const double g = gauss();
      if (std::abs(g) <= k) return g * sigma;
    }
  }

  // Derive an independent stream, e.g. one per worker or trial.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 finalizer over (seed, index)
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

private:
  std::mt19937_64 engine_;
};

}  // namespace leap
