#pragma once

// Pre-committed Gaussian noise. Each peer derives its noise for iteration t
// from a private seed, so only the N x T commitment table has to be
// published at genesis.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "biscotti/commit.hpp"
#include "biscotti/error.hpp"
#include "biscotti/ml/model.hpp"
#include "biscotti/quantize.hpp"
#include "biscotti/rng.hpp"
#include "biscotti/types.hpp"

namespace biscotti {

struct NoiseConfig {
  double epsilon = 2.0;
  double delta = 1e-5;

  void validate() const {
    if (!(epsilon > 0)) throw InvalidArgument("epsilon must be positive");
    if (!(delta > 0 && delta < 1)) throw InvalidArgument("delta must lie in (0, 1)");
  }
};

/// Gaussian mechanism scale for unit sensitivity: sqrt(2 ln(1.25/delta)) / epsilon.
inline double noise_sigma(double epsilon, double delta) {
  NoiseConfig{epsilon, delta}.validate();
  return std::sqrt(2.0 * std::log(1.25 / delta)) / epsilon;
}

/// Honest peers commit Gaussian noise; colluders commit all-zero vectors.
enum class NoiseKind { Gaussian, Zero };

template <class F>
struct NoiseVector {
  std::vector<double> zeta;
  QuantizedPoly<F> quantized;
  PeerId owner = 0;
  uint64_t iteration = 0;
};

/// zeta_t = (eta_t / b) * sum_{i=1..b} N(0, sigma^2 I), with a fresh blinding
/// constant. Deterministic in (peer_seed, t).
template <class F>
NoiseVector<F> generate_noise(const NoiseConfig& nc, const ml::TrainConfig& tc, std::size_t d, uint64_t peer_seed,
                              uint64_t t, PeerId owner = 0, NoiseKind kind = NoiseKind::Gaussian,
                              const QuantizeConfig& qc = {}) {
  nc.validate();
  tc.validate();
  Rng rng(derive_seed(peer_seed, {0x4e015e, t}));
  NoiseVector<F> out{std::vector<double>(d, 0.0), {}, owner, t};
  if (kind == NoiseKind::Gaussian) {
    double sigma = noise_sigma(nc.epsilon, nc.delta);
    double scale = tc.eta(t) / double(tc.batch_size);
    for (std::size_t i = 0; i < tc.batch_size; ++i)
      for (auto& z : out.zeta) z += rng.gaussian(0, sigma);
    for (auto& z : out.zeta) z *= scale;
  }
  out.quantized = encode<F>(out.zeta, F::random(rng), qc);
  return out;
}

template <class B>
struct NoiseTable {
  std::size_t peers = 0;
  std::size_t iterations = 0;
  std::vector<Commitment<B>> entries;

  const Commitment<B>& at(PeerId peer, uint64_t t) const {
    if (peer >= peers || t >= iterations) throw InvalidArgument("noise table index out of range");
    return entries[std::size_t(peer) * iterations + t];
  }
};

/// Commits every peer's noise for iterations 0..T-1.
template <class B>
NoiseTable<B> build_noise_table(const CommitPK<B>& pk, std::span<const uint64_t> peer_seeds,
                                std::span<const NoiseKind> kinds, uint64_t T, const NoiseConfig& nc,
                                const ml::TrainConfig& tc, const QuantizeConfig& qc = {}) {
  if (kinds.size() != peer_seeds.size()) throw InvalidArgument("one noise kind per peer required");
  NoiseTable<B> table{peer_seeds.size(), T, {}};
  table.entries.reserve(peer_seeds.size() * T);
  std::size_t d = pk.degree();
  for (std::size_t i = 0; i < peer_seeds.size(); ++i)
    for (uint64_t t = 0; t < T; ++t) {
      auto n = generate_noise<typename B::Scalar>(nc, tc, d, peer_seeds[i], t, PeerId(i), kinds[i], qc);
      table.entries.push_back(commit(pk, n.quantized));
    }
  return table;
}

/// Field sum of an update with its noise vectors. Fails if any resulting
/// coefficient leaves the headroom range.
template <class F>
QuantizedPoly<F> mask_update(const QuantizedPoly<F>& update, std::span<const QuantizedPoly<F>> noises,
                             const QuantizeConfig& qc = {}) {
  QuantizedPoly<F> out = update;
  for (const auto& n : noises) out += n;
  double bound = quantize_bound<F>(qc);
  for (std::size_t j = 1; j < out.coeffs.size(); ++j)
    if (std::fabs(out.coeffs[j].to_centered_double()) >= bound)
      throw OverflowError("masked update exceeds the quantization headroom");
  return out;
}

}  // namespace biscotti
