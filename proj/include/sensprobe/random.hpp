#ifndef SENSPROBE_RANDOM_HPP
#define SENSPROBE_RANDOM_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace sensprobe {

/// Seeded generator whose draws do not depend on the standard library's
/// distribution implementations, so results match across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection keeps the draw unbiased.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do v = engine_(); while (v >= limit);
    return v % n;
  }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename It>
  void shuffle(It first, It last) {
    for (auto n = last - first; n > 1; --n) std::swap(first[n - 1], first[below(static_cast<std::uint64_t>(n))]);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sensprobe

#endif  // SENSPROBE_RANDOM_HPP
