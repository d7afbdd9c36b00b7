#pragma once

// Prime fields in Montgomery form over a fixed number of 64-bit limbs.
//
// A field is described by a parameter struct exposing
//   static constexpr std::array<uint64_t, N> modulus;   // little-endian limbs
// The modulus must be odd and leave at least one spare bit in the top limb.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "biscotti/error.hpp"

namespace biscotti::crypto {

using u128 = unsigned __int128;

template <std::size_t N>
using Limbs = std::array<uint64_t, N>;

namespace limbs {

template <std::size_t N>
constexpr bool geq(const Limbs<N>& a, const Limbs<N>& b) {
  for (std::size_t i = N; i-- > 0;) {
    if (a[i] != b[i]) return a[i] > b[i];
  }
  return true;
}

template <std::size_t N>
constexpr bool is_zero(const Limbs<N>& a) {
  for (auto x : a)
    if (x != 0) return false;
  return true;
}

// a -= b, returns borrow
template <std::size_t N>
constexpr uint64_t sub_in_place(Limbs<N>& a, const Limbs<N>& b) {
  uint64_t borrow = 0;
  for (std::size_t i = 0; i < N; ++i) {
    u128 d = u128(a[i]) - b[i] - borrow;
    a[i] = uint64_t(d);
    borrow = uint64_t(d >> 64) ? 1 : 0;
  }
  return borrow;
}

// a += b, returns carry
template <std::size_t N>
constexpr uint64_t add_in_place(Limbs<N>& a, const Limbs<N>& b) {
  uint64_t carry = 0;
  for (std::size_t i = 0; i < N; ++i) {
    u128 s = u128(a[i]) + b[i] + carry;
    a[i] = uint64_t(s);
    carry = uint64_t(s >> 64);
  }
  return carry;
}

template <std::size_t N>
constexpr Limbs<N> shr1(Limbs<N> a) {
  for (std::size_t i = 0; i < N; ++i) {
    a[i] >>= 1;
    if (i + 1 < N) a[i] |= a[i + 1] << 63;
  }
  return a;
}

template <std::size_t N>
constexpr std::size_t bit_length(const Limbs<N>& a) {
  for (std::size_t i = N; i-- > 0;) {
    if (a[i] != 0) return 64 * i + (64 - std::size_t(__builtin_clzll(a[i])));
  }
  return 0;
}

template <std::size_t N>
constexpr bool bit(const Limbs<N>& a, std::size_t i) {
  return (a[i / 64] >> (i % 64)) & 1;
}

// (2 * a) mod m, for a < m
template <std::size_t N>
constexpr Limbs<N> double_mod(Limbs<N> a, const Limbs<N>& m) {
  uint64_t top = a[N - 1] >> 63;
  for (std::size_t i = N; i-- > 0;) {
    a[i] <<= 1;
    if (i > 0) a[i] |= a[i - 1] >> 63;
  }
  if (top || geq(a, m)) sub_in_place(a, m);
  return a;
}

// Parses a hex string (optional 0x prefix) into limbs.
template <std::size_t N>
constexpr Limbs<N> from_hex(std::string_view hex) {
  if (hex.size() >= 2 && hex[0] == '0' && (hex[1] == 'x' || hex[1] == 'X'))
    hex.remove_prefix(2);
  Limbs<N> out{};
  std::size_t bitpos = 0;
  for (std::size_t i = hex.size(); i-- > 0;) {
    char c = hex[i];
    uint64_t v = (c >= '0' && c <= '9')   ? uint64_t(c - '0')
                 : (c >= 'a' && c <= 'f') ? uint64_t(c - 'a' + 10)
                 : (c >= 'A' && c <= 'F') ? uint64_t(c - 'A' + 10)
                                          : 0;
    out[bitpos / 64] |= v << (bitpos % 64);
    bitpos += 4;
  }
  return out;
}

// Parses a decimal string into limbs (used for curve constants).
template <std::size_t N>
constexpr Limbs<N> from_dec(std::string_view dec) {
  Limbs<N> out{};
  for (char c : dec) {
    u128 carry = uint64_t(c - '0');
    for (std::size_t i = 0; i < N; ++i) {
      u128 t = u128(out[i]) * 10 + carry;
      out[i] = uint64_t(t);
      carry = t >> 64;
    }
  }
  return out;
}

}  // namespace limbs

template <class Params>
class MontField {
 public:
  static constexpr std::size_t kLimbs = Params::modulus.size();
  static constexpr std::size_t kBytes = 8 * kLimbs;
  using Repr = Limbs<kLimbs>;

  static constexpr Repr modulus() { return Params::modulus; }

  constexpr MontField() = default;

  static constexpr MontField zero() { return MontField(); }
  static constexpr MontField one() { return from_mont(kR); }

  static constexpr MontField from_u64(uint64_t v) {
    Repr r{};
    r[0] = v;
    return from_canonical_unchecked(reduce_once(r));
  }

  static constexpr MontField from_i64(int64_t v) {
    if (v >= 0) return from_u64(uint64_t(v));
    // -(2^63) needs the unsigned negation
    return -from_u64(uint64_t(0) - uint64_t(v));
  }

  /// Builds an element from a canonical integer; returns nullopt if >= p.
  static constexpr std::optional<MontField> from_canonical(const Repr& r) {
    if (limbs::geq(r, Params::modulus)) return std::nullopt;
    return from_canonical_unchecked(r);
  }

  /// Reduces an arbitrary N-limb integer modulo p.
  static constexpr MontField reduce(Repr r) {
    while (limbs::geq(r, Params::modulus)) limbs::sub_in_place(r, Params::modulus);
    return from_canonical_unchecked(r);
  }

  static constexpr MontField from_hex(std::string_view hex) {
    return reduce(limbs::from_hex<kLimbs>(hex));
  }

  static constexpr MontField from_dec(std::string_view dec) {
    return reduce(limbs::from_dec<kLimbs>(dec));
  }

  /// Uniform element drawn by rejection sampling from a 64-bit generator.
  template <class Urbg>
  static MontField random(Urbg& gen) {
    const std::size_t bits = limbs::bit_length(Params::modulus);
    for (;;) {
      Repr r{};
      for (auto& x : r) x = uint64_t(gen());
      std::size_t top_bits = bits - 64 * (kLimbs - 1);
      if (top_bits < 64) r[kLimbs - 1] &= (uint64_t(1) << top_bits) - 1;
      if (!limbs::geq(r, Params::modulus)) return from_canonical_unchecked(r);
    }
  }

  constexpr Repr to_canonical() const { return mont_mul(v_, Repr{1}); }

  constexpr bool is_zero() const { return limbs::is_zero(v_); }
  constexpr bool is_one() const { return v_ == kR; }

  friend constexpr bool operator==(const MontField& a, const MontField& b) { return a.v_ == b.v_; }

  friend constexpr MontField operator+(MontField a, const MontField& b) {
    a += b;
    return a;
  }
  friend constexpr MontField operator-(MontField a, const MontField& b) {
    a -= b;
    return a;
  }
  friend constexpr MontField operator*(const MontField& a, const MontField& b) {
    return from_mont(mont_mul(a.v_, b.v_));
  }
  constexpr MontField operator-() const {
    if (is_zero()) return *this;
    Repr r = Params::modulus;
    limbs::sub_in_place(r, v_);
    return from_mont(r);
  }

  constexpr MontField& operator+=(const MontField& b) {
    uint64_t carry = limbs::add_in_place(v_, b.v_);
    if (carry || limbs::geq(v_, Params::modulus)) limbs::sub_in_place(v_, Params::modulus);
    return *this;
  }
  constexpr MontField& operator-=(const MontField& b) {
    if (limbs::sub_in_place(v_, b.v_)) limbs::add_in_place(v_, Params::modulus);
    return *this;
  }
  constexpr MontField& operator*=(const MontField& b) {
    v_ = mont_mul(v_, b.v_);
    return *this;
  }

  constexpr MontField square() const { return *this * *this; }
  constexpr MontField dbl() const { return *this + *this; }

  template <std::size_t M>
  constexpr MontField pow(const Limbs<M>& e) const {
    MontField result = one();
    for (std::size_t i = limbs::bit_length(e); i-- > 0;) {
      result = result.square();
      if (limbs::bit(e, i)) result *= *this;
    }
    return result;
  }

  constexpr MontField pow(uint64_t e) const { return pow(Limbs<1>{e}); }

  /// Multiplicative inverse; the inverse of zero is reported as an error.
  constexpr MontField inverse() const {
    if (is_zero()) throw InvalidArgument("inverse of zero field element");
    Repr e = Params::modulus;
    Repr two{};
    two[0] = 2;
    limbs::sub_in_place(e, two);
    return pow(e);
  }

  /// Square root for p = 3 mod 4; nullopt for non-residues.
  std::optional<MontField> sqrt() const {
    static_assert(Params::modulus[0] % 4 == 3, "sqrt implemented for p = 3 mod 4 only");
    Repr e = Params::modulus;
    Repr one_r{};
    one_r[0] = 1;
    limbs::add_in_place(e, one_r);
    e = limbs::shr1(limbs::shr1(e));
    MontField r = pow(e);
    if (r.square() == *this) return r;
    return std::nullopt;
  }

  /// True when the canonical value exceeds (p-1)/2, i.e. represents a negative
  /// number in centered form.
  constexpr bool is_negative() const {
    Repr c = to_canonical();
    return !limbs::geq(kHalf, c);
  }

  /// Centered representative as a signed 64-bit integer; nullopt if it does
  /// not fit.
  constexpr std::optional<int64_t> to_centered_i64() const {
    bool neg = is_negative();
    Repr c = neg ? (-*this).to_canonical() : to_canonical();
    for (std::size_t i = 1; i < kLimbs; ++i)
      if (c[i] != 0) return std::nullopt;
    if (c[0] > uint64_t(INT64_MAX)) return std::nullopt;
    return neg ? -int64_t(c[0]) : int64_t(c[0]);
  }

  /// Centered representative converted to the nearest double.
  double to_centered_double() const {
    bool neg = is_negative();
    Repr c = neg ? (-*this).to_canonical() : to_canonical();
    long double acc = 0;
    for (std::size_t i = kLimbs; i-- > 0;) acc = acc * 18446744073709551616.0L + (long double)c[i];
    return double(neg ? -acc : acc);
  }

  /// Canonical little-endian encoding, kBytes long.
  std::array<uint8_t, kBytes> to_bytes() const {
    std::array<uint8_t, kBytes> out{};
    Repr c = to_canonical();
    for (std::size_t i = 0; i < kBytes; ++i) out[i] = uint8_t(c[i / 8] >> (8 * (i % 8)));
    return out;
  }

  /// Parses the canonical little-endian encoding; rejects values >= p.
  static std::optional<MontField> from_bytes(std::span<const uint8_t> in) {
    if (in.size() != kBytes) return std::nullopt;
    Repr r{};
    for (std::size_t i = 0; i < kBytes; ++i) r[i / 8] |= uint64_t(in[i]) << (8 * (i % 8));
    return from_canonical(r);
  }

  std::string to_hex() const {
    static const char* digits = "0123456789abcdef";
    Repr c = to_canonical();
    std::string s = "0x";
    for (std::size_t i = kLimbs; i-- > 0;)
      for (int s4 = 60; s4 >= 0; s4 -= 4) s.push_back(digits[(c[i] >> s4) & 0xf]);
    return s;
  }

  constexpr const Repr& mont_repr() const { return v_; }

 private:
  static constexpr uint64_t compute_inv() {
    // Newton iteration for p^-1 mod 2^64, then negate.
    uint64_t p0 = Params::modulus[0];
    uint64_t x = 1;
    for (int i = 0; i < 7; ++i) x *= 2 - p0 * x;
    return uint64_t(0) - x;
  }
  static constexpr Repr compute_r(int doublings) {
    Repr r{};
    r[0] = 1;
    for (int i = 0; i < doublings; ++i) r = limbs::double_mod(r, Params::modulus);
    return r;
  }
  static constexpr Repr compute_half() {
    Repr h = Params::modulus;
    return limbs::shr1(h);
  }

  static constexpr uint64_t kInv = compute_inv();
  static constexpr Repr kR = compute_r(64 * int(kLimbs));
  static constexpr Repr kR2 = compute_r(128 * int(kLimbs));
  static constexpr Repr kHalf = compute_half();

  static constexpr Repr reduce_once(Repr r) {
    while (limbs::geq(r, Params::modulus)) limbs::sub_in_place(r, Params::modulus);
    return r;
  }

  static constexpr MontField from_mont(const Repr& r) {
    MontField f;
    f.v_ = r;
    return f;
  }
  static constexpr MontField from_canonical_unchecked(const Repr& r) {
    return from_mont(mont_mul(r, kR2));
  }

  // CIOS Montgomery multiplication: a * b * R^-1 mod p.
  static constexpr Repr mont_mul(const Repr& a, const Repr& b) {
    constexpr std::size_t n = kLimbs;
    uint64_t t[n + 2] = {};
    for (std::size_t i = 0; i < n; ++i) {
      uint64_t carry = 0;
      for (std::size_t j = 0; j < n; ++j) {
        u128 s = u128(a[j]) * b[i] + t[j] + carry;
        t[j] = uint64_t(s);
        carry = uint64_t(s >> 64);
      }
      u128 s = u128(t[n]) + carry;
      t[n] = uint64_t(s);
      t[n + 1] = uint64_t(s >> 64);

      uint64_t m = t[0] * kInv;
      s = u128(m) * Params::modulus[0] + t[0];
      carry = uint64_t(s >> 64);
      for (std::size_t j = 1; j < n; ++j) {
        s = u128(m) * Params::modulus[j] + t[j] + carry;
        t[j - 1] = uint64_t(s);
        carry = uint64_t(s >> 64);
      }
      s = u128(t[n]) + carry;
      t[n - 1] = uint64_t(s);
      t[n] = t[n + 1] + uint64_t(s >> 64);
    }
    Repr r{};
    for (std::size_t i = 0; i < n; ++i) r[i] = t[i];
    if (t[n] || limbs::geq(r, Params::modulus)) limbs::sub_in_place(r, Params::modulus);
    return r;
  }

  Repr v_{};
};

}  // namespace biscotti::crypto
