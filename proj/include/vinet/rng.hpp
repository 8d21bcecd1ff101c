#pragma once

// Deterministic random source. Uniform/normal/gamma draws are generated with
// explicit algorithms on top of std::mt19937_64 (whose sequence is fixed by
// the standard), so results are bit-reproducible across platforms and do not
// depend on libstdc++'s distribution implementations.

#include <cmath>
#include <cstdint>
#include <random>

namespace vinet {

// SplitMix64 step; used to derive independent per-item seeds from one master
// seed: child(i) = splitmix64(master + (i+1) * golden).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t child_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master + (index + 1) * 0x9e3779b97f4a7c15ull);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}

  std::uint64_t raw() { return eng_(); }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Standard normal (Box-Muller, pairwise cached).
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do { u1 = uniform(); } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(th);
    have_cached_ = true;
    return r * std::cos(th);
  }

  // Gamma(shape k, scale 1), Marsaglia-Tsang; requires k > 0.
  double gamma(double k) {
    if (k < 1.0) {
      const double u = std::pow(uniform_positive(), 1.0 / k);
      return gamma(k + 1.0) * u;
    }
    const double d = k - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_positive();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Inverse-Gamma(alpha, beta): 1/X with X ~ Gamma(alpha, rate beta).
  double inverse_gamma(double alpha, double beta) { return beta / gamma(alpha); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(uniform() * (hi - lo + 1));
  }

 private:
  double uniform_positive() {
    double u = 0.0;
    do { u = uniform(); } while (u <= 0.0);
    return u;
  }

  std::mt19937_64 eng_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

} // namespace vinet
