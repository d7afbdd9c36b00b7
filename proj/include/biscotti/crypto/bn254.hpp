#pragma once

// BN254 (alt_bn128) pairing-friendly curve: base field tower, the two source
// groups, and the optimal ate pairing.
//
//   E  : y^2 = x^3 + 3           over Fp      (G1)
//   E' : y^2 = x^3 + 3 / (9 + u) over Fp2     (G2, D-type sextic twist)
//   Fp2  = Fp[u]  / (u^2 + 1)
//   Fp6  = Fp2[v] / (v^3 - (9 + u))
//   Fp12 = Fp6[w] / (w^2 - v)

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "biscotti/crypto/curve.hpp"
#include "biscotti/crypto/mont_field.hpp"

namespace biscotti::crypto::bn254 {

struct FpParams {
  static constexpr Limbs<4> modulus =
      limbs::from_hex<4>("30644e72e131a029b85045b68181585d97816a916871ca8d3c208c16d87cfd47");
};
struct FrParams {
  static constexpr Limbs<4> modulus =
      limbs::from_hex<4>("30644e72e131a029b85045b68181585d2833e84879b9709143e1f593f0000001");
};

using Fp = MontField<FpParams>;
/// Scalar field: the prime order r of G1, G2 and GT.
using Fr = MontField<FrParams>;

/// BN parameter u (the curve is generated from it).
inline constexpr uint64_t kBnU = 4965661367192848881ULL;

struct Fp2 {
  Fp c0, c1;

  static Fp2 zero() { return {}; }
  static Fp2 one() { return {Fp::one(), Fp::zero()}; }
  bool is_zero() const { return c0.is_zero() && c1.is_zero(); }
  friend bool operator==(const Fp2&, const Fp2&) = default;

  friend Fp2 operator+(const Fp2& a, const Fp2& b) { return {a.c0 + b.c0, a.c1 + b.c1}; }
  friend Fp2 operator-(const Fp2& a, const Fp2& b) { return {a.c0 - b.c0, a.c1 - b.c1}; }
  Fp2 operator-() const { return {-c0, -c1}; }
  friend Fp2 operator*(const Fp2& a, const Fp2& b) {
    Fp t0 = a.c0 * b.c0;
    Fp t1 = a.c1 * b.c1;
    return {t0 - t1, (a.c0 + a.c1) * (b.c0 + b.c1) - t0 - t1};
  }
  Fp2& operator+=(const Fp2& b) { return *this = *this + b; }
  Fp2& operator-=(const Fp2& b) { return *this = *this - b; }
  Fp2& operator*=(const Fp2& b) { return *this = *this * b; }

  Fp2 scale(const Fp& k) const { return {c0 * k, c1 * k}; }
  Fp2 square() const {
    Fp a = (c0 + c1) * (c0 - c1);
    Fp b = c0 * c1;
    return {a, b + b};
  }
  Fp2 dbl() const { return *this + *this; }
  Fp2 conjugate() const { return {c0, -c1}; }
  Fp2 inverse() const {
    Fp norm = c0.square() + c1.square();
    Fp inv = norm.inverse();
    return {c0 * inv, -(c1 * inv)};
  }
  /// Multiplication by the non-residue xi = 9 + u.
  Fp2 mul_by_xi() const {
    Fp nine_c0 = c0.dbl().dbl().dbl() + c0;
    Fp nine_c1 = c1.dbl().dbl().dbl() + c1;
    return {nine_c0 - c1, c0 + nine_c1};
  }
  template <std::size_t M>
  Fp2 pow(const Limbs<M>& e) const {
    Fp2 r = one();
    for (std::size_t i = limbs::bit_length(e); i-- > 0;) {
      r = r.square();
      if (limbs::bit(e, i)) r *= *this;
    }
    return r;
  }
};

struct Fp6 {
  Fp2 c0, c1, c2;

  static Fp6 zero() { return {}; }
  static Fp6 one() { return {Fp2::one(), Fp2::zero(), Fp2::zero()}; }
  bool is_zero() const { return c0.is_zero() && c1.is_zero() && c2.is_zero(); }
  friend bool operator==(const Fp6&, const Fp6&) = default;

  friend Fp6 operator+(const Fp6& a, const Fp6& b) { return {a.c0 + b.c0, a.c1 + b.c1, a.c2 + b.c2}; }
  friend Fp6 operator-(const Fp6& a, const Fp6& b) { return {a.c0 - b.c0, a.c1 - b.c1, a.c2 - b.c2}; }
  Fp6 operator-() const { return {-c0, -c1, -c2}; }
  friend Fp6 operator*(const Fp6& a, const Fp6& b) {
    Fp2 t0 = a.c0 * b.c0;
    Fp2 t1 = a.c1 * b.c1;
    Fp2 t2 = a.c2 * b.c2;
    Fp2 r0 = ((a.c1 + a.c2) * (b.c1 + b.c2) - t1 - t2).mul_by_xi() + t0;
    Fp2 r1 = (a.c0 + a.c1) * (b.c0 + b.c1) - t0 - t1 + t2.mul_by_xi();
    Fp2 r2 = (a.c0 + a.c2) * (b.c0 + b.c2) - t0 - t2 + t1;
    return {r0, r1, r2};
  }
  Fp6 square() const { return *this * *this; }
  /// Multiplication by v.
  Fp6 mul_by_v() const { return {c2.mul_by_xi(), c0, c1}; }
  Fp6 inverse() const {
    Fp2 a = c0.square() - (c1 * c2).mul_by_xi();
    Fp2 b = c2.square().mul_by_xi() - c0 * c1;
    Fp2 c = c1.square() - c0 * c2;
    Fp2 f = c0 * a + (c2 * b + c1 * c).mul_by_xi();
    Fp2 fi = f.inverse();
    return {a * fi, b * fi, c * fi};
  }
};

struct Fp12 {
  Fp6 c0, c1;

  static Fp12 zero() { return {}; }
  static Fp12 one() { return {Fp6::one(), Fp6::zero()}; }
  bool is_one() const { return *this == one(); }
  friend bool operator==(const Fp12&, const Fp12&) = default;

  friend Fp12 operator*(const Fp12& a, const Fp12& b) {
    Fp6 t0 = a.c0 * b.c0;
    Fp6 t1 = a.c1 * b.c1;
    return {t0 + t1.mul_by_v(), (a.c0 + a.c1) * (b.c0 + b.c1) - t0 - t1};
  }
  Fp12& operator*=(const Fp12& b) { return *this = *this * b; }

  Fp12 square() const {
    Fp6 t = c0 * c1;
    Fp6 r0 = (c0 + c1) * (c0 + c1.mul_by_v()) - t - t.mul_by_v();
    return {r0, t + t};
  }
  Fp12 conjugate() const { return {c0, -c1}; }
  Fp12 inverse() const {
    Fp6 t = (c0.square() - c1.square().mul_by_v()).inverse();
    return {c0 * t, -(c1 * t)};
  }

  /// The p-power Frobenius endomorphism.
  Fp12 frobenius() const;

  template <std::size_t M>
  Fp12 pow(const Limbs<M>& e) const {
    Fp12 r = one();
    for (std::size_t i = limbs::bit_length(e); i-- > 0;) {
      r = r.square();
      if (limbs::bit(e, i)) r *= *this;
    }
    return r;
  }

  /// Canonical encoding: the twelve Fp coefficients in tower order.
  std::vector<uint8_t> to_bytes() const {
    std::vector<uint8_t> out;
    for (const Fp6* h : {&c0, &c1})
      for (const Fp2* q : {&h->c0, &h->c1, &h->c2})
        for (const Fp* f : {&q->c0, &q->c1}) {
          auto b = f->to_bytes();
          out.insert(out.end(), b.begin(), b.end());
        }
    return out;
  }
};

namespace detail {

// xi^(k (p - 1) / 6) for k = 0..5, used by the Frobenius maps.
struct FrobeniusConstants {
  std::array<Fp2, 6> gamma;
  FrobeniusConstants() {
    Limbs<4> e = FpParams::modulus;
    Limbs<4> one_l{1, 0, 0, 0};
    limbs::sub_in_place(e, one_l);
    // (p - 1) / 6
    Limbs<4> q{};
    u128 rem = 0;
    for (std::size_t i = 4; i-- > 0;) {
      u128 cur = (rem << 64) | e[i];
      q[i] = uint64_t(cur / 6);
      rem = cur % 6;
    }
    Fp2 xi{Fp::from_u64(9), Fp::one()};
    Fp2 base = xi.pow(q);
    gamma[0] = Fp2::one();
    for (int k = 1; k < 6; ++k) gamma[k] = gamma[k - 1] * base;
  }
};

inline const FrobeniusConstants& frobenius_constants() {
  static const FrobeniusConstants c;
  return c;
}

}  // namespace detail

inline Fp12 Fp12::frobenius() const {
  // Element = sum_k a_k w^k with w^2 = v; (a w^k)^p = conj(a) gamma_k w^k.
  const auto& g = detail::frobenius_constants().gamma;
  Fp12 r;
  r.c0.c0 = c0.c0.conjugate() * g[0];
  r.c1.c0 = c1.c0.conjugate() * g[1];
  r.c0.c1 = c0.c1.conjugate() * g[2];
  r.c1.c1 = c1.c1.conjugate() * g[3];
  r.c0.c2 = c0.c2.conjugate() * g[4];
  r.c1.c2 = c1.c2.conjugate() * g[5];
  return r;
}

struct G1Curve {
  using Field = Fp;
  static Fp b() { return Fp::from_u64(3); }
};

struct G2Curve {
  using Field = Fp2;
  static Fp2 b() {
    static const Fp2 v{
        Fp::from_dec("19485874751759354771024239261021720505790618469301721065564631296452457478373"),
        Fp::from_dec("266929791119991161246907387137283842545076965332900288569378510910307636690")};
    return v;
  }
};

using G1 = CurvePoint<G1Curve, Fr>;
using G2 = CurvePoint<G2Curve, Fr>;

inline G1 g1_generator() { return G1::from_affine(Fp::one(), Fp::from_u64(2)); }

inline G2 g2_generator() {
  static const G2 g = G2::from_affine(
      Fp2{Fp::from_dec("10857046999023057135944570762232829481370756359578518086990519993285655852781"),
          Fp::from_dec("11559732032986387107991004021392285783925812861821192530917403151452391805634")},
      Fp2{Fp::from_dec("8495653923123431417604973247489272438418190587263600148770280649306958101930"),
          Fp::from_dec("4082367875863433681332203403145435568316851327593401208105741076214120093531")});
  return g;
}

/// Precomputed Miller-loop line coefficients for a fixed G2 point. Each line
/// through the running point T with slope s contributes
///   y_P - s x_P w + (s x_T - y_T) w^3
/// so it is stored as the pair (s, s x_T - y_T).
class G2Prepared {
 public:
  struct Line {
    Fp2 slope;
    Fp2 offset;
  };

  G2Prepared() : infinity_(true) {}

  explicit G2Prepared(const G2& q) {
    if (q.is_identity()) {
      infinity_ = true;
      return;
    }
    auto [qx, qy] = q.to_affine();
    Fp2 tx = qx, ty = qy;
    const Limbs<2> loop = ate_loop_count();
    auto add_line = [&](const Fp2& px, const Fp2& py) {
      if (tx == px) throw ConsistencyError("degenerate line in Miller loop");
      Fp2 s = (py - ty) * (px - tx).inverse();
      lines_.push_back({s, s * tx - ty});
      Fp2 nx = s.square() - tx - px;
      ty = s * (tx - nx) - ty;
      tx = nx;
    };
    for (std::size_t i = limbs::bit_length(loop) - 1; i-- > 0;) {
      Fp2 s = (tx.square().dbl() + tx.square()) * ty.dbl().inverse();
      lines_.push_back({s, s * tx - ty});
      Fp2 nx = s.square() - tx.dbl();
      ty = s * (tx - nx) - ty;
      tx = nx;
      if (limbs::bit(loop, i)) add_line(qx, qy);
    }
    // Frobenius corrections: Q1 = pi(Q), Q2 = -pi^2(Q).
    const auto& g = detail::frobenius_constants().gamma;
    Fp2 q1x = qx.conjugate() * g[2];
    Fp2 q1y = qy.conjugate() * g[3];
    Fp2 q2x = q1x.conjugate() * g[2];
    Fp2 q2y = -(q1y.conjugate() * g[3]);
    add_line(q1x, q1y);
    add_line(q2x, q2y);
  }

  bool is_infinity() const { return infinity_; }
  const std::vector<Line>& lines() const { return lines_; }

  static Limbs<2> ate_loop_count() {
    u128 v = u128(6) * kBnU + 2;
    return {uint64_t(v), uint64_t(v >> 64)};
  }

 private:
  bool infinity_ = false;
  std::vector<Line> lines_;
};

namespace detail {

// f * (y_P + a w + b w^3), the sparse product used for every line.
inline Fp12 mul_by_line(const Fp12& f, const Fp& y, const Fp2& a, const Fp2& b) {
  // (c0 + c1 v + c2 v^2)(A + B v), with v^3 = xi
  auto sparse6 = [](const Fp6& c, const Fp2& A, const Fp2& B) {
    return Fp6{c.c0 * A + (c.c2 * B).mul_by_xi(), c.c0 * B + c.c1 * A, c.c1 * B + c.c2 * A};
  };
  Fp6 t0{f.c0.c0.scale(y), f.c0.c1.scale(y), f.c0.c2.scale(y)};
  Fp6 t1 = sparse6(f.c1, a, b);
  Fp2 ya = a + Fp2{y, Fp::zero()};
  Fp6 c1 = sparse6(f.c0 + f.c1, ya, b) - t0 - t1;
  return {t0 + t1.mul_by_v(), c1};
}

inline Fp12 apply_line(const Fp12& f, const G2Prepared::Line& l, const Fp& px, const Fp& py) {
  return mul_by_line(f, py, -l.slope.scale(px), l.offset);
}

}  // namespace detail

/// Miller loop of the optimal ate pairing, with vertical lines omitted
/// (they vanish under the final exponentiation).
inline Fp12 miller_loop(const G1& p, const G2Prepared& q) {
  if (p.is_identity() || q.is_infinity()) return Fp12::one();
  auto [px, py] = p.to_affine();
  const Limbs<2> loop = G2Prepared::ate_loop_count();
  const auto& lines = q.lines();
  std::size_t k = 0;
  Fp12 f = Fp12::one();
  for (std::size_t i = limbs::bit_length(loop) - 1; i-- > 0;) {
    f = detail::apply_line(f.square(), lines[k++], px, py);
    if (limbs::bit(loop, i)) f = detail::apply_line(f, lines[k++], px, py);
  }
  f = detail::apply_line(f, lines[k++], px, py);
  f = detail::apply_line(f, lines[k++], px, py);
  return f;
}

namespace detail {

// f^u for the BN parameter u; f must lie in the cyclotomic subgroup.
inline Fp12 pow_u(const Fp12& f) { return f.pow(Limbs<1>{kBnU}); }

}  // namespace detail

/// f^((p^12 - 1) / r) by the reference square-and-multiply route over the
/// hard exponent (p^4 - p^2 + 1) / r. Kept as an oracle for the fast route.
inline Fp12 final_exponentiation_naive(const Fp12& f) {
  Fp12 t = f.conjugate() * f.inverse();
  t = t.frobenius().frobenius() * t;
  static const Limbs<12> hard = limbs::from_hex<12>(
      "1baaa710b0759ad331ec15183177faf6c0eb522d5b122784e529a5861876f6b3b1b1355d1892"
      "27d79581e16f3fd90c66b887d56d5095f23aaa441e3954bcf8adcc7b44c87cdbacff1154e7e1"
      "da014fd5abf5cc4f49c36d4e81bb482ccdf42b1");
  return t.pow(hard);
}

/// f^((p^12 - 1) / r). The hard part uses the Frobenius decomposition in
/// terms of three exponentiations by u (Devegili-Scott-Dahab); inversion in
/// the cyclotomic subgroup is conjugation.
inline Fp12 final_exponentiation(const Fp12& f) {
  Fp12 t1 = f.conjugate() * f.inverse();
  t1 = t1.frobenius().frobenius() * t1;

  Fp12 fp = t1.frobenius();
  Fp12 fp2 = fp.frobenius();
  Fp12 fp3 = fp2.frobenius();

  Fp12 fu = detail::pow_u(t1);
  Fp12 fu2 = detail::pow_u(fu);
  Fp12 fu3 = detail::pow_u(fu2);

  Fp12 y3 = fu.frobenius().conjugate();
  Fp12 fu2p = fu2.frobenius();
  Fp12 fu3p = fu3.frobenius();
  Fp12 y2 = fu2.frobenius().frobenius();

  Fp12 y0 = fp * fp2 * fp3;
  Fp12 y1 = t1.conjugate();
  Fp12 y5 = fu2.conjugate();
  Fp12 y4 = (fu * fu2p).conjugate();
  Fp12 y6 = (fu3 * fu3p).conjugate();

  Fp12 t0 = y6.square() * y4 * y5;
  Fp12 t = y3 * y5 * t0;
  t0 = t0 * y2;
  t = (t.square() * t0).square();
  t0 = t * y1;
  t = t * y0;
  return t0.square() * t;
}

inline Fp12 pairing(const G1& p, const G2& q) {
  return final_exponentiation(miller_loop(p, G2Prepared(q)));
}

/// Checks prod_i e(P_i, Q_i) == 1 with a single final exponentiation.
inline bool pairing_product_is_one(std::span<const std::pair<G1, const G2Prepared*>> terms) {
  Fp12 f = Fp12::one();
  for (const auto& [p, q] : terms) f *= miller_loop(p, *q);
  return final_exponentiation(f).is_one();
}

}  // namespace biscotti::crypto::bn254
