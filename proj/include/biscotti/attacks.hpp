#pragma once

// Adversaries and attack metrics: label flipping, gradient inversion of
// aggregated softmax updates, and the zero-noise collusion Monte Carlo.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "biscotti/crypto/hash.hpp"
#include "biscotti/error.hpp"
#include "biscotti/ml/dataset.hpp"
#include "biscotti/ml/model.hpp"
#include "biscotti/roles.hpp"

namespace biscotti {

enum class AdversaryStrategy { Honest, LabelFlip, ZeroNoiseCollusion };

struct AdversaryConfig {
  double fraction = 0.0;
  AdversaryStrategy strategy = AdversaryStrategy::Honest;
  int src_label = 1;
  int dst_label = 0;

  void validate() const {
    if (!(fraction >= 0 && fraction < 1)) throw InvalidArgument("adversary fraction must be in [0, 1)");
  }
};

/// Relabels every `src` example as `dst`; features are untouched.
inline ml::Dataset poison_dataset(const ml::Dataset& data, int src, int dst) {
  if (src < 0 || src >= data.num_classes || dst < 0 || dst >= data.num_classes)
    throw InvalidArgument("label outside the dataset's classes");
  ml::Dataset out = data;
  for (auto& y : out.labels)
    if (y == src) y = dst;
  return out;
}

/// Fraction of `src`-labelled validation examples the model gets wrong.
inline double attack_rate(const ml::ModelShape& shape, const ml::ModelParams& model, const ml::Dataset& validation,
                          int src) {
  std::size_t total = 0, wrong = 0;
  for (std::size_t i = 0; i < validation.size(); ++i) {
    if (validation.labels[i] != src) continue;
    ++total;
    wrong += ml::predict(shape, model.weights, validation.row(i)) != src;
  }
  if (total == 0) throw InvalidArgument("validation set has no examples of the target label");
  return double(wrong) / double(total);
}

struct GrayImage {
  std::size_t width = 0, height = 0;
  std::vector<double> pixels;  // row-major, in [0, 255]
};

/// The class-c block of a softmax weight update is a signed combination of
/// the contributing inputs. Returns it reshaped to width x height and
/// min-max scaled to [0, 255]; a constant block maps to a black image.
inline GrayImage invert_gradient(std::span<const double> aggregate, const ml::ModelShape& shape, int c,
                                 std::size_t width, std::size_t height) {
  if (shape.kind != ml::ModelKind::Softmax) throw InvalidArgument("inversion needs a softmax model");
  if (aggregate.size() != shape.dim()) throw InvalidArgument("aggregate length does not match the model");
  if (c < 0 || c >= shape.classes) throw InvalidArgument("class out of range");
  if (width * height != shape.features) throw InvalidArgument("image shape does not match the feature count");
  auto block = aggregate.subspan(std::size_t(c) * shape.features, shape.features);
  auto [lo, hi] = std::minmax_element(block.begin(), block.end());
  GrayImage img{width, height, std::vector<double>(block.size(), 0.0)};
  double range = *hi - *lo;
  if (range > 0)
    for (std::size_t i = 0; i < block.size(); ++i) img.pixels[i] = 255.0 * (block[i] - *lo) / range;
  return img;
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine similarity of different lengths");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0 || bb == 0) return 0;
  return ab / std::sqrt(aa * bb);
}

/// Binary PGM (P5), 8-bit.
inline void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  for (double p : img.pixels) out.put(char(uint8_t(std::clamp(std::lround(p), 0L, 255L))));
}

struct CollusionParams {
  std::size_t peers = 100;
  std::size_t verifiers = 3;
  uint64_t stake_per_peer = 10;
};

struct CollusionResult {
  std::size_t trials = 0;
  std::size_t violations = 0;
  double probability() const { return trials ? double(violations) / double(trials) : 0.0; }
};

/// Monte Carlo over independent iterations. Malicious peers hold
/// `malicious_fraction` of the (uniform) stake and committed zero noise at
/// genesis. Each trial draws an honest victim, its noiser committee, and the
/// verifier committee from fresh seeds; the victim's update is exposed when
/// every noiser is malicious and some verifier is malicious.
inline CollusionResult collusion_trials(double malicious_fraction, std::size_t num_noisers, std::size_t trials,
                                        uint64_t seed, const CollusionParams& p = {}) {
  if (trials < 1) throw InvalidArgument("at least one trial required");
  if (!(malicious_fraction >= 0 && malicious_fraction <= 1)) throw InvalidArgument("fraction must be in [0, 1]");
  std::size_t malicious = std::size_t(std::llround(malicious_fraction * double(p.peers)));
  if (malicious >= p.peers) throw InvalidArgument("need at least one honest peer");
  StakeMap stake;
  for (PeerId i = 0; i < p.peers; ++i) stake[i] = p.stake_per_peer;
  StakeRing ring(stake);
  // peers [0, malicious) collude
  auto is_bad = [&](PeerId x) { return x < malicious; };
  CollusionResult r{trials, 0};
  for (std::size_t t = 0; t < trials; ++t) {
    auto base = crypto::Sha256().update(std::string_view("collusion")).update_u64(seed).update_u64(t).finish();
    Rng rng(derive_seed(seed, {t}));
    PeerId victim = PeerId(malicious + rng.below(p.peers - malicious));
    auto nseed = crypto::Sha256().update(base).update(std::string_view("noise")).finish();
    auto noisers = draw_members(ring, nseed, num_noisers, victim);
    if (!std::all_of(noisers.begin(), noisers.end(), is_bad)) continue;
    auto vseed = crypto::Sha256().update(base).update(std::string_view("verify")).finish();
    auto verifiers = draw_members(ring, vseed, p.verifiers);
    if (std::any_of(verifiers.begin(), verifiers.end(), is_bad)) ++r.violations;
  }
  return r;
}

inline double collusion_violation_probability(double malicious_fraction, std::size_t num_noisers, std::size_t trials,
                                              uint64_t seed, const CollusionParams& p = {}) {
  return collusion_trials(malicious_fraction, num_noisers, trials, seed, p).probability();
}

/// P(all noisers malicious) * P(at least one malicious verifier) for
/// sampling without replacement under uniform stake.
inline double collusion_violation_exact(double malicious_fraction, std::size_t num_noisers,
                                        const CollusionParams& p = {}) {
  double m = std::round(malicious_fraction * double(p.peers));
  double n = double(p.peers);
  double all_noisers = 1;
  for (std::size_t i = 0; i < num_noisers; ++i) all_noisers *= std::max(0.0, (m - double(i)) / (n - 1 - double(i)));
  double no_bad_verifier = 1;
  for (std::size_t i = 0; i < p.verifiers; ++i) no_bad_verifier *= (n - m - double(i)) / (n - double(i));
  return all_noisers * (1 - no_bad_verifier);
}

/// Cosine similarity after subtracting each vector's mean, so that the
/// comparison ignores brightness offset and contrast.
inline double image_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw InvalidArgument("image sizes differ");
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= double(a.size());
  mb /= double(b.size());
  std::vector<double> ca(a.size()), cb(b.size());
  for (std::size_t i = 0; i < a.size(); ++i) ca[i] = a[i] - ma, cb[i] = b[i] - mb;
  return cosine_similarity(ca, cb);
}

struct InversionRow {
  std::size_t batch = 0;
  int target_class = 0;
  /// Mean over trials of the best similarity to any example in the batch.
  double similarity = 0;
  /// Inversion from the first trial.
  GrayImage image;
};

/// Aggregates `batch` single-example softmax updates taken against a zero
/// model on the synthetic image task (the first example is always of the
/// target class, the rest are drawn from all classes), inverts the target
/// class block, and scores it against the nearest contributing image.
inline std::vector<InversionRow> inversion_study(std::span<const std::size_t> batches, std::size_t side,
                                                 uint64_t seed, std::size_t trials = 20, int classes = 10) {
  ml::DatasetParams dp;
  dp.classes = classes;
  dp.image_side = side;
  dp.noise = 0.3;
  dp.examples = 4000;
  auto data = ml::make_synthetic_images(dp, seed);
  ml::ModelShape shape{ml::ModelKind::Softmax, data.dim, classes};
  ml::TrainConfig tc;
  tc.batch_size = 1;
  tc.eta0 = 1.0;
  const int target = 0;
  std::vector<std::size_t> of_target;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.labels[i] == target) of_target.push_back(i);
  if (of_target.empty()) throw Error("no examples of the target class");

  std::vector<InversionRow> rows;
  auto zero = ml::ModelParams::zeros(shape);
  for (std::size_t b : batches) {
    if (b < 1) throw InvalidArgument("batch sizes must be positive");
    InversionRow row{b, target, 0, {}};
    for (std::size_t t = 0; t < trials; ++t) {
      Rng rng(derive_seed(seed, {0x1f7, b, t}));
      std::vector<std::size_t> members{of_target[rng.below(of_target.size())]};
      while (members.size() < b) members.push_back(rng.below(data.size()));
      std::vector<double> agg(shape.dim(), 0.0);
      for (std::size_t i : members) {
        std::vector<std::size_t> one{i};
        auto u = ml::compute_local_update(shape, zero, data.subset(one), tc, 0);
        for (std::size_t j = 0; j < agg.size(); ++j) agg[j] += u.delta[j];
      }
      auto img = invert_gradient(agg, shape, target, side, side);
      double best = -1;
      for (std::size_t i : members) best = std::max(best, image_similarity(img.pixels, data.row(i)));
      row.similarity += best / double(trials);
      if (t == 0) row.image = std::move(img);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace biscotti
