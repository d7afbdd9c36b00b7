#pragma once

// Verifiable secret sharing of update polynomials and secure aggregation.
// A dealer evaluates its polynomial at points 1..n (n = 2(d+1)), assigns
// them round-robin to the aggregators, and attaches a witness per point.
// Aggregators add shares point-wise; any d+1 summed points interpolate the
// sum of all contributing polynomials.

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "biscotti/commit.hpp"
#include "biscotti/crypto/signature.hpp"
#include "biscotti/error.hpp"
#include "biscotti/serialize.hpp"
#include "biscotti/types.hpp"

namespace biscotti {

using PublicKeys = std::map<PeerId, crypto::PublicKey>;

struct SignatureEntry {
  PeerId signer = 0;
  crypto::Signature sig{};
  friend bool operator==(const SignatureEntry&, const SignatureEntry&) = default;
};

template <class B>
struct ShareBundle {
  PeerId dealer = 0;
  uint64_t iteration = 0;
  uint64_t round = 0;
  Commitment<B> commitment;
  std::vector<Witness<B>> shares;
  std::vector<SignatureEntry> signatures;
  friend bool operator==(const ShareBundle&, const ShareBundle&) = default;
};

template <class B>
struct AggregateShare {
  typename B::Scalar point;
  typename B::Scalar summed_eval;
  typename B::G1 summed_witness;
  std::size_t contributor_count = 0;
  friend bool operator==(const AggregateShare&, const AggregateShare&) = default;

  Witness<B> as_witness() const { return {summed_witness, point, summed_eval}; }
};

/// Message a verifier signs to approve an update commitment.
template <class B>
std::vector<uint8_t> approval_message(uint64_t iteration, uint64_t round, PeerId dealer, const Commitment<B>& c) {
  ByteWriter w;
  w.str("biscotti-approve");
  w.u64(iteration);
  w.u64(round);
  w.u32(dealer);
  w.raw(B::encode_g1(c.value));
  return w.take();
}

/// Evaluation points 1..n split round-robin over the aggregators.
template <class B>
std::map<PeerId, ShareBundle<B>> deal_shares(const QuantizedPoly<typename B::Scalar>& poly, const CommitPK<B>& pk,
                                             std::size_t n_points, std::span<const PeerId> aggregators,
                                             PeerId dealer = 0, uint64_t iteration = 0, uint64_t round = 0) {
  using F = typename B::Scalar;
  if (aggregators.size() < 2) throw InvalidArgument("need at least two aggregators");
  if (aggregators.size() > n_points) throw InvalidArgument("more aggregators than evaluation points");
  if (n_points < poly.coeffs.size()) throw InvalidArgument("fewer evaluation points than coefficients");
  auto c = commit(pk, poly);
  std::map<PeerId, ShareBundle<B>> out;
  for (PeerId a : aggregators) out[a] = ShareBundle<B>{dealer, iteration, round, c, {}, {}};
  for (std::size_t i = 0; i < n_points; ++i)
    out[aggregators[i % aggregators.size()]].shares.push_back(create_witness(pk, poly, F::from_u64(i + 1)));
  return out;
}

/// Points assigned to the aggregator at `index` of an m-member committee.
inline std::vector<uint64_t> assigned_points(std::size_t index, std::size_t m, std::size_t n_points) {
  std::vector<uint64_t> pts;
  for (std::size_t z = index; z < n_points; z += m) pts.push_back(z + 1);
  return pts;
}

/// Counts distinct committee members with a valid approval signature.
template <class B>
std::size_t count_approvals(const ShareBundle<B>& bundle, std::span<const PeerId> verifiers, const PublicKeys& keys) {
  auto msg = approval_message<B>(bundle.iteration, bundle.round, bundle.dealer, bundle.commitment);
  std::vector<PeerId> seen;
  for (const auto& e : bundle.signatures) {
    if (std::find(verifiers.begin(), verifiers.end(), e.signer) == verifiers.end()) continue;
    if (std::find(seen.begin(), seen.end(), e.signer) != seen.end()) continue;
    auto k = keys.find(e.signer);
    if (k == keys.end() || !crypto::verify_signature(k->second, msg, e.sig)) continue;
    seen.push_back(e.signer);
  }
  return seen.size();
}

/// True iff a strict majority of the verifier committee approved the
/// commitment and every share opens it correctly.
template <class B>
bool accept_bundle(const ShareBundle<B>& bundle, std::span<const PeerId> verifiers, const CommitPK<B>& pk,
                   const PublicKeys& keys) {
  if (2 * count_approvals(bundle, verifiers, keys) <= verifiers.size()) return false;
  if (bundle.shares.empty()) return false;
  for (const auto& w : bundle.shares)
    if (!verify_share(pk, bundle.commitment, w)) return false;
  return true;
}

/// Point-wise sums of evaluations and witnesses.
template <class B>
std::vector<AggregateShare<B>> sum_shares(std::span<const ShareBundle<B>> bundles) {
  if (bundles.empty()) throw InvalidArgument("no bundles to sum");
  const auto& first = bundles[0].shares;
  std::vector<AggregateShare<B>> out;
  for (const auto& w : first) out.push_back({w.point, w.eval, w.value, 1});
  for (std::size_t b = 1; b < bundles.size(); ++b) {
    const auto& s = bundles[b].shares;
    if (s.size() != first.size()) throw InvalidArgument("bundles hold different point sets");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!(s[i].point == out[i].point)) throw InvalidArgument("bundles hold different point sets");
      out[i].summed_eval += s[i].eval;
      out[i].summed_witness += s[i].value;
      ++out[i].contributor_count;
    }
  }
  return out;
}

/// Coefficients of the unique polynomial of degree < |points| through the
/// given values.
template <class F>
std::vector<F> interpolate(std::span<const F> xs, std::span<const F> ys) {
  const std::size_t n = xs.size();
  if (ys.size() != n || n == 0) throw InvalidArgument("interpolation needs matching non-empty inputs");
  // master(x) = prod (x - x_i), coefficients low to high
  std::vector<F> master{F::one()};
  for (const auto& x : xs) {
    std::vector<F> next(master.size() + 1, F::zero());
    for (std::size_t j = 0; j < master.size(); ++j) {
      next[j + 1] += master[j];
      next[j] -= master[j] * x;
    }
    master = std::move(next);
  }
  std::vector<F> out(n, F::zero());
  for (std::size_t i = 0; i < n; ++i) {
    F rem;
    auto basis = divide_by_linear<F>(master, xs[i], rem);
    F denom = F::one();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      F diff = xs[i] - xs[j];
      if (diff.is_zero()) throw InvalidArgument("interpolation points must be distinct");
      denom *= diff;
    }
    F scale = ys[i] * denom.inverse();
    for (std::size_t j = 0; j < n; ++j) out[j] += basis[j] * scale;
  }
  return out;
}

/// Recovers the summed polynomial from verified aggregate shares. Uses the
/// first d+1 points, then requires every extra point and the combined
/// commitment to agree with the result.
template <class B>
QuantizedPoly<typename B::Scalar> recover_aggregate(std::span<const AggregateShare<B>> shares, const CommitPK<B>& pk,
                                                    const Commitment<B>& combined, int scale_bits = 20) {
  using F = typename B::Scalar;
  const std::size_t need = pk.degree() + 1;
  std::vector<F> xs, ys;
  for (const auto& s : shares) {
    if (std::find(xs.begin(), xs.end(), s.point) != xs.end()) continue;
    xs.push_back(s.point);
    ys.push_back(s.summed_eval);
  }
  if (xs.size() < need) throw InvalidArgument("insufficient points to recover the aggregate");
  auto coeffs = interpolate<F>(std::span(xs).first(need), std::span(ys).first(need));
  for (std::size_t i = need; i < xs.size(); ++i)
    if (!(evaluate<F>(coeffs, xs[i]) == ys[i])) throw ConsistencyError("aggregate shares are inconsistent");
  QuantizedPoly<F> out{std::move(coeffs), scale_bits};
  if (!(commit(pk, out) == combined)) throw ConsistencyError("recovered aggregate does not match the commitments");
  return out;
}

template <class B>
void write_bundle(ByteWriter& w, const ShareBundle<B>& b) {
  w.u32(b.dealer);
  w.u64(b.iteration);
  w.u64(b.round);
  w.bytes(B::encode_g1(b.commitment.value));
  w.u32(uint32_t(b.shares.size()));
  for (const auto& s : b.shares) {
    w.raw(s.point.to_bytes());
    w.raw(s.eval.to_bytes());
    w.raw(B::encode_g1(s.value));
  }
  w.u32(uint32_t(b.signatures.size()));
  for (const auto& e : b.signatures) {
    w.u32(e.signer);
    w.raw(e.sig);
  }
}

template <class B>
typename B::G1 read_g1(ByteReader& r, std::span<const uint8_t> bytes) {
  auto g = B::decode_g1(bytes);
  if (!g) r.fail("invalid group element");
  return *g;
}

template <class B>
typename B::Scalar read_scalar(ByteReader& r) {
  using F = typename B::Scalar;
  auto off = r.offset();
  auto v = F::from_bytes(r.raw(F::kBytes));
  if (!v) throw ParseError("non-canonical field element", off);
  return *v;
}

template <class B>
ShareBundle<B> read_bundle(ByteReader& r) {
  using F = typename B::Scalar;
  ShareBundle<B> b;
  b.dealer = r.u32();
  b.iteration = r.u64();
  b.round = r.u64();
  auto cb = r.bytes();
  b.commitment.value = read_g1<B>(r, cb);
  std::size_t n = r.count(2 * F::kBytes + B::kG1Bytes);
  for (std::size_t i = 0; i < n; ++i) {
    Witness<B> w;
    w.point = read_scalar<B>(r);
    w.eval = read_scalar<B>(r);
    w.value = read_g1<B>(r, r.raw(B::kG1Bytes));
    b.shares.push_back(w);
  }
  std::size_t ns = r.count(4 + 64);
  for (std::size_t i = 0; i < ns; ++i) {
    SignatureEntry e;
    e.signer = r.u32();
    e.sig = r.fixed<64>();
    b.signatures.push_back(e);
  }
  return b;
}

}  // namespace biscotti
