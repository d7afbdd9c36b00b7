#pragma once

// Deterministic randomness. Distributions are implemented here rather than
// taken from <random>, whose distribution algorithms vary across standard
// libraries; only the mt19937_64 engine (fully specified) is reused.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace biscotti {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Mixes a base seed with a list of tags into an independent stream seed.
inline uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> tags) {
  uint64_t s = splitmix64(base);
  for (uint64_t t : tags) s = splitmix64(s ^ splitmix64(t + 0x632be59bd9b4e019ULL));
  return s;
}

class Rng {
 public:
  using result_type = uint64_t;

  explicit Rng(uint64_t seed) : eng_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~uint64_t(0); }
  result_type operator()() { return eng_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), unbiased.
  uint64_t below(uint64_t n) {
    if (n == 0) return 0;
    uint64_t limit = max() - max() % n;
    uint64_t v;
    do v = eng_();
    while (v >= limit);
    return v % n;
  }

  /// Standard normal via the Marsaglia polar method.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  double gaussian(double mean, double sigma) { return mean + sigma * gaussian(); }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0;
  bool has_spare_ = false;
};

}  // namespace biscotti
