#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "biscotti/error.hpp"

namespace biscotti {

struct KrumConfig {
  std::size_t R = 0;
  std::size_t f = 0;

  void validate() const {
    if (R < 3 || 2 * f + 2 >= R) throw InvalidArgument("Multi-KRUM needs f < (R - 2) / 2");
  }
  std::size_t neighbors() const { return R - f - 2; }
  std::size_t accepted() const { return R - f; }

  /// Largest tolerated f for a sample of size R.
  static KrumConfig for_sample(std::size_t R) {
    if (R < 3) throw InvalidArgument("Multi-KRUM needs at least 3 updates");
    return {R, (R - 3) / 2};
  }
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

/// s(i) = sum of squared distances from update i to its R - f - 2 nearest
/// other updates.
inline std::vector<double> krum_scores(std::span<const std::vector<double>> updates, const KrumConfig& cfg) {
  cfg.validate();
  if (updates.size() != cfg.R) throw InvalidArgument("update count must equal R");
  const std::size_t n = updates.size();
  for (const auto& u : updates)
    if (u.size() != updates[0].size()) throw InvalidArgument("updates differ in dimension");
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) dist[i * n + j] = dist[j * n + i] = squared_distance(updates[i], updates[j]);
  std::vector<double> scores(n), row;
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) row.push_back(dist[i * n + j]);
    std::partial_sort(row.begin(), row.begin() + std::ptrdiff_t(cfg.neighbors()), row.end());
    scores[i] = std::accumulate(row.begin(), row.begin() + std::ptrdiff_t(cfg.neighbors()), 0.0);
  }
  return scores;
}

/// Indices of the R - f lowest-scoring updates, in increasing index order.
/// Equal scores are ranked by input position.
inline std::vector<std::size_t> multi_krum_select(std::span<const std::vector<double>> updates, const KrumConfig& cfg) {
  auto scores = krum_scores(updates, cfg);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  order.resize(cfg.accepted());
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace biscotti
