#pragma once

// Exhaustive reference implementations used to cross-check the library.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

namespace oracle {

inline double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

// Calls fn on every size-k subset of {0..n-1} as a bitmask.
template <class Fn>
void for_each_subset(std::size_t n, std::size_t k, Fn fn) {
  for (unsigned mask = 0; mask < (1u << n); ++mask)
    if (std::size_t(__builtin_popcount(mask)) == k) fn(mask);
}

// Score of i: the minimum, over every choice of k other updates, of the
// summed squared distances.
inline std::vector<double> krum_scores(const std::vector<std::vector<double>>& u, std::size_t f) {
  const std::size_t n = u.size(), k = n - f - 2;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) others.push_back(j);
    double best = std::numeric_limits<double>::infinity();
    for_each_subset(others.size(), k, [&](unsigned mask) {
      double s = 0;
      for (std::size_t b = 0; b < others.size(); ++b)
        if (mask >> b & 1) s += sqdist(u[i], u[others[b]]);
      best = std::min(best, s);
    });
    out[i] = best;
  }
  return out;
}

// The unique (R - f)-subset S such that every member outranks every
// non-member under the order (score, index).
inline std::vector<std::size_t> krum_select(const std::vector<std::vector<double>>& u, std::size_t f) {
  auto s = krum_scores(u, f);
  const std::size_t n = u.size();
  std::vector<std::size_t> found;
  for_each_subset(n, n - f, [&](unsigned mask) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if ((mask >> i & 1) && !(mask >> j & 1) && !(s[i] < s[j] || (s[i] == s[j] && i < j))) return;
    found.clear();
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) found.push_back(i);
  });
  return found;
}

}  // namespace oracle
