#pragma once

// Polynomial commitments over a pairing backend. With public key
// powers[j] = g1 * alpha^j, a polynomial phi commits to g1 * phi(alpha), and
// an opening at z is the commitment to psi_z(x) = (phi(x) - phi(z)) / (x - z),
// checked by e(C - g1 * phi(z), g2) == e(W, g2 * (alpha - z)).

#include <cstdint>
#include <span>
#include <vector>

#include "biscotti/crypto/backend.hpp"
#include "biscotti/error.hpp"
#include "biscotti/quantize.hpp"
#include "biscotti/rng.hpp"

namespace biscotti {

template <class B>
struct Commitment {
  typename B::G1 value;
  friend bool operator==(const Commitment&, const Commitment&) = default;
};

template <class B>
struct Witness {
  typename B::G1 value;
  typename B::Scalar point;
  typename B::Scalar eval;
  friend bool operator==(const Witness&, const Witness&) = default;
};

template <class B>
struct CommitPK {
  using G1 = typename B::G1;
  using G2 = typename B::G2;

  std::vector<G1> powers;
  G2 g2;
  G2 g2_alpha;
  typename B::PreparedG2 g2_prepared;
  /// prepared g2 * (alpha - z) for z = 1..n_points
  std::vector<typename B::PreparedG2> point_prepared;
  /// hterms[z-1][j-1] = sum_{k<j} z^(j-1-k) powers[k], so that the witness
  /// for opening at z is sum_{j>=1} coeffs[j] * hterms[z-1][j-1].
  std::vector<std::vector<G1>> hterms;

  std::size_t degree() const { return powers.size() - 1; }
  std::size_t n_points() const { return point_prepared.size(); }
};

namespace detail {

// Non-adjacent form, least significant digit first.
inline std::vector<int8_t> naf(uint64_t k) {
  std::vector<int8_t> out;
  while (k) {
    if (k & 1) {
      int8_t d = int8_t(2 - int(k & 3));
      out.push_back(d);
      k = d > 0 ? k - 1 : k + 1;
    } else {
      out.push_back(0);
    }
    k >>= 1;
  }
  return out;
}

}  // namespace detail

/// sum_i points[i] * scalars[i]. Scalars with small centered values share
/// one doubling chain; the rest fall back to individual multiplication.
template <class B>
typename B::G1 msm(std::span<const typename B::G1> points, std::span<const typename B::Scalar> scalars) {
  using G1 = typename B::G1;
  if (points.size() != scalars.size()) throw InvalidArgument("msm length mismatch");
  G1 acc = G1::identity();
  if constexpr (requires(const G1& p) { p.dbl(); }) {
    std::vector<std::pair<G1, std::vector<int8_t>>> small;
    std::size_t width = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (scalars[i].is_zero()) continue;
      auto c = scalars[i].to_centered_i64();
      if (c && *c > -(int64_t(1) << 40) && *c < (int64_t(1) << 40)) {
        G1 p = *c < 0 ? -points[i] : points[i];
        auto digits = detail::naf(uint64_t(*c < 0 ? -*c : *c));
        width = std::max(width, digits.size());
        small.emplace_back(p, std::move(digits));
      } else {
        acc += points[i] * scalars[i];
      }
    }
    G1 chain = G1::identity();
    for (std::size_t bit = width; bit-- > 0;) {
      chain = chain.dbl();
      for (auto& [p, digits] : small) {
        if (bit >= digits.size() || digits[bit] == 0) continue;
        if (digits[bit] > 0)
          chain += p;
        else
          chain -= p;
      }
    }
    return acc + chain;
  } else {
    for (std::size_t i = 0; i < points.size(); ++i) acc += points[i] * scalars[i];
    return acc;
  }
}

/// Generates alpha from `seed`, publishes its powers, and forgets it.
/// `n_points` evaluation points 1..n get prepared pairing inputs and
/// witness tables.
template <class B>
CommitPK<B> trusted_setup(std::size_t degree, uint64_t seed, std::size_t n_points = 0) {
  using F = typename B::Scalar;
  if (degree < 1) throw InvalidArgument("commitment degree must be >= 1");
  Rng rng(derive_seed(seed, {0x5e7u}));
  F alpha = F::random(rng);
  while (alpha.is_zero()) alpha = F::random(rng);

  CommitPK<B> pk;
  pk.powers.reserve(degree + 1);
  F a = F::one();
  for (std::size_t j = 0; j <= degree; ++j, a *= alpha) pk.powers.push_back(B::g1() * a);
  pk.g2 = B::g2();
  pk.g2_alpha = pk.g2 * alpha;
  alpha = F::zero();
  pk.g2_prepared = B::prepare(pk.g2);
  for (std::size_t z = 1; z <= n_points; ++z) {
    F zf = F::from_u64(z);
    pk.point_prepared.push_back(B::prepare(pk.g2_alpha - pk.g2 * zf));
    std::vector<typename B::G1> h(degree);
    h[0] = pk.powers[0];
    for (std::size_t j = 1; j < degree; ++j) h[j] = h[j - 1] * zf + pk.powers[j];
    pk.hterms.push_back(std::move(h));
  }
  return pk;
}

template <class B>
Commitment<B> commit(const CommitPK<B>& pk, const QuantizedPoly<typename B::Scalar>& poly) {
  if (poly.coeffs.size() > pk.powers.size()) throw InvalidArgument("polynomial degree exceeds the public key");
  return {msm<B>(std::span(pk.powers).first(poly.coeffs.size()), poly.coeffs)};
}

template <class B>
Commitment<B> combine(std::span<const Commitment<B>> cs) {
  if (cs.empty()) throw InvalidArgument("cannot combine an empty commitment list");
  auto acc = cs[0].value;
  for (std::size_t i = 1; i < cs.size(); ++i) acc += cs[i].value;
  return {acc};
}

template <class F>
F evaluate(std::span<const F> coeffs, const F& z) {
  F acc = F::zero();
  for (std::size_t j = coeffs.size(); j-- > 0;) acc = acc * z + coeffs[j];
  return acc;
}

/// Synthetic division by (x - z): returns the quotient and sets `remainder`.
template <class F>
std::vector<F> divide_by_linear(std::span<const F> coeffs, const F& z, F& remainder) {
  if (coeffs.empty()) {
    remainder = F::zero();
    return {};
  }
  std::vector<F> q(coeffs.size() - 1);
  F carry = F::zero();
  for (std::size_t j = coeffs.size(); j-- > 1;) {
    carry = carry * z + coeffs[j];
    q[j - 1] = carry;
  }
  remainder = carry * z + coeffs[0];
  return q;
}

/// Witness by long division and a direct commitment to the quotient.
template <class B>
Witness<B> create_witness_by_division(const CommitPK<B>& pk, const QuantizedPoly<typename B::Scalar>& poly,
                                      const typename B::Scalar& z) {
  using F = typename B::Scalar;
  if (z.is_zero()) throw InvalidArgument("evaluation point 0 is reserved");
  F eval = evaluate<F>(poly.coeffs, z);
  F rem;
  auto q = divide_by_linear<F>(poly.coeffs, z, rem);
  // phi(x) - phi(z) must divide exactly
  if (!(rem == eval)) throw ConsistencyError("nonzero remainder in witness division");
  QuantizedPoly<F> qp{std::move(q), poly.scale_bits};
  auto c = qp.coeffs.empty() ? Commitment<B>{B::G1::identity()} : commit(pk, qp);
  return {c.value, z, eval};
}

/// Witness for opening `poly` at z. Points 1..pk.n_points() use the
/// precomputed tables; any other nonzero z uses long division.
template <class B>
Witness<B> create_witness(const CommitPK<B>& pk, const QuantizedPoly<typename B::Scalar>& poly,
                          const typename B::Scalar& z) {
  using F = typename B::Scalar;
  if (z.is_zero()) throw InvalidArgument("evaluation point 0 is reserved");
  if (poly.coeffs.size() > pk.powers.size()) throw InvalidArgument("polynomial degree exceeds the public key");
  auto zi = z.to_centered_i64();
  if (zi && *zi >= 1 && std::size_t(*zi) <= pk.n_points() && poly.coeffs.size() >= 2) {
    const auto& h = pk.hterms[std::size_t(*zi) - 1];
    std::span<const F> tail(poly.coeffs.data() + 1, poly.coeffs.size() - 1);
    return {msm<B>(std::span(h).first(tail.size()), tail), z, evaluate<F>(poly.coeffs, z)};
  }
  return create_witness_by_division(pk, poly, z);
}

template <class B>
bool verify_share(const CommitPK<B>& pk, const Commitment<B>& c, const Witness<B>& w) {
  using F = typename B::Scalar;
  if (w.point.is_zero()) return false;
  auto lhs = c.value - B::g1() * w.eval;
  auto zi = w.point.to_centered_i64();
  if (zi && *zi >= 1 && std::size_t(*zi) <= pk.n_points())
    return B::pairing_eq(lhs, pk.g2_prepared, w.value, pk.point_prepared[std::size_t(*zi) - 1]);
  F z = w.point;
  return B::pairing_eq(lhs, pk.g2_prepared, w.value, B::prepare(pk.g2_alpha - pk.g2 * z));
}

}  // namespace biscotti
