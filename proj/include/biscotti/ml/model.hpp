#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "biscotti/error.hpp"
#include "biscotti/ml/dataset.hpp"
#include "biscotti/rng.hpp"
#include "biscotti/types.hpp"

namespace biscotti::ml {

/// LogReg: binary cross-entropy on sigmoid(w.x).
/// Softmax: multiclass cross-entropy, weights stored as classes x features.
/// Squared: 1/2 (w.x - y)^2 regression, kept for hand-checkable tests.
enum class ModelKind { LogReg, Softmax, Squared };

struct ModelShape {
  ModelKind kind = ModelKind::LogReg;
  std::size_t features = 0;
  int classes = 2;

  std::size_t dim() const { return kind == ModelKind::Softmax ? features * std::size_t(classes) : features; }

  static ModelShape for_dataset(ModelKind kind, const Dataset& d) { return {kind, d.dim, d.num_classes}; }
};

struct ModelParams {
  std::vector<double> weights;
  uint64_t iteration = 0;

  static ModelParams zeros(const ModelShape& s) { return {std::vector<double>(s.dim(), 0.0), 0}; }
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct UpdateVector {
  std::vector<double> delta;
  PeerId peer = 0;
  uint64_t iteration = 0;
};

struct TrainConfig {
  double eta0 = 0.1;
  double decay = 0.0;
  double lambda = 0.0;
  std::size_t batch_size = 10;
  uint64_t total_iterations = 100;

  /// eta_t = eta0 / (1 + t * decay)
  double eta(uint64_t t) const { return eta0 / (1.0 + double(t) * decay); }

  void validate() const {
    if (!(eta0 > 0) || !std::isfinite(eta0)) throw InvalidArgument("eta0 must be positive");
    if (decay < 0) throw InvalidArgument("decay must be non-negative");
    if (lambda < 0) throw InvalidArgument("lambda must be non-negative");
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  }
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

inline void softmax_probs(const ModelShape& s, std::span<const double> w, std::span<const double> x,
                          std::vector<double>& p) {
  p.resize(std::size_t(s.classes));
  double mx = -INFINITY;
  for (int c = 0; c < s.classes; ++c) {
    p[std::size_t(c)] = dot(w.subspan(std::size_t(c) * s.features, s.features), x);
    mx = std::max(mx, p[std::size_t(c)]);
  }
  double z = 0;
  for (auto& v : p) z += (v = std::exp(v - mx));
  for (auto& v : p) v /= z;
}

inline void check_shape(const ModelShape& s, std::span<const double> w, std::size_t features) {
  if (w.size() != s.dim()) throw InvalidArgument("weight vector length does not match model dimension");
  if (features != s.features) throw InvalidArgument("dataset feature dimension does not match model");
}

}  // namespace detail

/// Adds the gradient of the single-example loss to `grad`.
inline void add_gradient(const ModelShape& s, std::span<const double> w, std::span<const double> x, int y,
                         std::span<double> grad) {
  switch (s.kind) {
    case ModelKind::LogReg: {
      double g = detail::sigmoid(detail::dot(w, x)) - double(y);
      for (std::size_t j = 0; j < x.size(); ++j) grad[j] += g * x[j];
      break;
    }
    case ModelKind::Squared: {
      double g = detail::dot(w, x) - double(y);
      for (std::size_t j = 0; j < x.size(); ++j) grad[j] += g * x[j];
      break;
    }
    case ModelKind::Softmax: {
      thread_local std::vector<double> p;
      detail::softmax_probs(s, w, x, p);
      for (int c = 0; c < s.classes; ++c) {
        double g = p[std::size_t(c)] - (c == y ? 1.0 : 0.0);
        double* row = grad.data() + std::size_t(c) * s.features;
        for (std::size_t j = 0; j < x.size(); ++j) row[j] += g * x[j];
      }
      break;
    }
  }
}

/// Single-example loss, used by gradient checks.
inline double example_loss(const ModelShape& s, std::span<const double> w, std::span<const double> x, int y) {
  switch (s.kind) {
    case ModelKind::LogReg: {
      double z = detail::dot(w, x);
      // log(1 + e^z) - y z, computed stably
      double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
      return softplus - double(y) * z;
    }
    case ModelKind::Squared: {
      double r = detail::dot(w, x) - double(y);
      return 0.5 * r * r;
    }
    case ModelKind::Softmax: {
      std::vector<double> p;
      detail::softmax_probs(s, w, x, p);
      return -std::log(std::max(p[std::size_t(y)], 1e-300));
    }
  }
  return 0;
}

inline int predict(const ModelShape& s, std::span<const double> w, std::span<const double> x) {
  switch (s.kind) {
    case ModelKind::LogReg: return detail::dot(w, x) > 0 ? 1 : 0;
    case ModelKind::Squared: return detail::dot(w, x) > 0.5 ? 1 : 0;
    case ModelKind::Softmax: {
      int best = 0;
      double bv = -INFINITY;
      for (int c = 0; c < s.classes; ++c) {
        double v = detail::dot(w.subspan(std::size_t(c) * s.features, s.features), x);
        if (v > bv) bv = v, best = c;
      }
      return best;
    }
  }
  return 0;
}

/// Fraction of misclassified examples.
inline double validation_error(const ModelShape& s, const ModelParams& m, const Dataset& data) {
  if (data.empty()) throw InvalidArgument("empty validation set");
  detail::check_shape(s, m.weights, data.dim);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < data.size(); ++i) wrong += predict(s, m.weights, data.row(i)) != data.labels[i];
  return double(wrong) / double(data.size());
}

inline double l2_norm(std::span<const double> v) { return std::sqrt(detail::dot(v, v)); }

/// Scales v down to norm `bound` when it exceeds it.
inline void clip_norm(std::span<double> v, double bound = 1.0) {
  double n = l2_norm(v);
  if (n > bound) {
    double f = bound / n;
    for (auto& x : v) x *= f;
  }
}

/// One local SGD step against the global model:
///   delta = -eta_t (lambda w + (1/b) sum grad l), clipped to norm 1.
/// The batch is drawn uniformly with replacement from `rng_seed`.
inline UpdateVector compute_local_update(const ModelShape& s, const ModelParams& model, const Dataset& data,
                                         const TrainConfig& cfg, uint64_t rng_seed, PeerId peer = 0) {
  if (data.empty()) throw InvalidArgument("empty local dataset");
  cfg.validate();
  detail::check_shape(s, model.weights, data.dim);
  std::vector<double> grad(s.dim(), 0.0);
  Rng rng(rng_seed);
  for (std::size_t k = 0; k < cfg.batch_size; ++k) {
    std::size_t i = rng.below(data.size());
    add_gradient(s, model.weights, data.row(i), data.labels[i], grad);
  }
  double eta = cfg.eta(model.iteration);
  double inv_b = 1.0 / double(cfg.batch_size);
  UpdateVector u{std::vector<double>(s.dim()), peer, model.iteration};
  for (std::size_t j = 0; j < grad.size(); ++j) {
    if (!std::isfinite(grad[j])) throw Error("non-finite gradient");
    u.delta[j] = -eta * (cfg.lambda * model.weights[j] + inv_b * grad[j]);
  }
  clip_norm(u.delta);
  return u;
}

inline ModelParams apply_aggregate(const ModelParams& m, std::span<const double> aggregate) {
  if (aggregate.size() != m.weights.size()) throw InvalidArgument("aggregate dimension mismatch");
  ModelParams out{m.weights, m.iteration + 1};
  for (std::size_t j = 0; j < aggregate.size(); ++j) out.weights[j] += aggregate[j];
  return out;
}

}  // namespace biscotti::ml
