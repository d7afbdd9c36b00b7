#pragma once

// Group backends for the polynomial commitment scheme.
//
// A backend bundles a scalar field, two source groups written additively,
// a target group, and a bilinear pairing. Protocol code is templated on the
// backend; two are provided:
//
//   Bn254Backend  asymmetric optimal-ate pairing over BN254.
//   DebugBackend  a non-hiding stand-in over the Mersenne prime 2^61 - 1 in
//                 which every group element is its own discrete logarithm and
//                 the pairing is field multiplication. Commitments reduce to
//                 polynomial evaluation at the setup secret. Fast, exact, and
//                 useful for large simulations; it provides no secrecy.

#include <array>
#include <concepts>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "biscotti/crypto/bn254.hpp"
#include "biscotti/crypto/mont_field.hpp"

namespace biscotti::crypto {

struct Bn254Backend {
  static constexpr std::string_view kName = "bn254";

  using Scalar = bn254::Fr;
  using G1 = bn254::G1;
  using G2 = bn254::G2;
  using GT = bn254::Fp12;
  using PreparedG2 = bn254::G2Prepared;

  static constexpr std::size_t kG1Bytes = 32;
  static constexpr std::size_t kG2Bytes = 128;

  static G1 g1() { return bn254::g1_generator(); }
  static G2 g2() { return bn254::g2_generator(); }

  static PreparedG2 prepare(const G2& q) { return PreparedG2(q); }

  static GT pairing(const G1& p, const G2& q) { return bn254::pairing(p, q); }
  static GT gt_mul(const GT& a, const GT& b) { return a * b; }
  static GT gt_pow(const GT& a, const Scalar& k) { return a.pow(k.to_canonical()); }
  static std::vector<uint8_t> encode_gt(const GT& a) { return a.to_bytes(); }

  /// e(a, b) == e(c, d), evaluated as e(a, b) e(-c, d) == 1.
  static bool pairing_eq(const G1& a, const PreparedG2& b, const G1& c, const PreparedG2& d) {
    std::array<std::pair<G1, const PreparedG2*>, 2> terms{{{a, &b}, {-c, &d}}};
    return bn254::pairing_product_is_one(terms);
  }

  /// Compressed encoding: little-endian x with the top two bits of the last
  /// byte used as flags (bit 7 = identity, bit 6 = y is the "negative" root).
  static std::array<uint8_t, kG1Bytes> encode_g1(const G1& p) {
    std::array<uint8_t, kG1Bytes> out{};
    if (p.is_identity()) {
      out[kG1Bytes - 1] = 0x80;
      return out;
    }
    auto [x, y] = p.to_affine();
    out = x.to_bytes();
    if (y.is_negative()) out[kG1Bytes - 1] |= 0x40;
    return out;
  }

  static std::optional<G1> decode_g1(std::span<const uint8_t> in) {
    if (in.size() != kG1Bytes) return std::nullopt;
    std::array<uint8_t, kG1Bytes> buf{};
    std::copy(in.begin(), in.end(), buf.begin());
    uint8_t flags = buf[kG1Bytes - 1] & 0xc0;
    buf[kG1Bytes - 1] &= 0x3f;
    if (flags & 0x80) {
      for (auto b : buf)
        if (b) return std::nullopt;
      if (flags & 0x40) return std::nullopt;
      return G1::identity();
    }
    auto x = bn254::Fp::from_bytes(buf);
    if (!x) return std::nullopt;
    auto y = (x->square() * *x + bn254::Fp::from_u64(3)).sqrt();
    if (!y) return std::nullopt;
    if (y->is_negative() != bool(flags & 0x40)) *y = -*y;
    return G1::from_affine(*x, *y);
  }

  /// Uncompressed encoding: x.c0 | x.c1 | y.c0 | y.c1, all zero for identity.
  static std::array<uint8_t, kG2Bytes> encode_g2(const G2& q) {
    std::array<uint8_t, kG2Bytes> out{};
    if (q.is_identity()) return out;
    auto [x, y] = q.to_affine();
    std::size_t off = 0;
    for (const auto* f : {&x.c0, &x.c1, &y.c0, &y.c1}) {
      auto b = f->to_bytes();
      std::copy(b.begin(), b.end(), out.begin() + std::ptrdiff_t(off));
      off += b.size();
    }
    return out;
  }

  static std::optional<G2> decode_g2(std::span<const uint8_t> in) {
    if (in.size() != kG2Bytes) return std::nullopt;
    bool all_zero = true;
    for (auto b : in) all_zero = all_zero && b == 0;
    if (all_zero) return G2::identity();
    std::array<bn254::Fp, 4> f;
    for (std::size_t i = 0; i < 4; ++i) {
      auto v = bn254::Fp::from_bytes(in.subspan(32 * i, 32));
      if (!v) return std::nullopt;
      f[i] = *v;
    }
    bn254::Fp2 x{f[0], f[1]}, y{f[2], f[3]};
    bn254::G2 q;
    try {
      q = G2::from_affine(x, y);
    } catch (const InvalidArgument&) {
      return std::nullopt;
    }
    return q;
  }
};

struct Mersenne61Params {
  static constexpr Limbs<1> modulus = {(uint64_t(1) << 61) - 1};
};

namespace debug {

using Fp61 = MontField<Mersenne61Params>;

/// Group element represented by its discrete logarithm; Tag keeps G1, G2 and
/// GT distinct types.
template <int Tag>
class LogGroup {
 public:
  LogGroup() = default;
  explicit LogGroup(const Fp61& log) : log_(log) {}

  static LogGroup identity() { return LogGroup(); }
  bool is_identity() const { return log_.is_zero(); }
  const Fp61& log() const { return log_; }

  friend bool operator==(const LogGroup&, const LogGroup&) = default;
  friend LogGroup operator+(const LogGroup& a, const LogGroup& b) { return LogGroup(a.log_ + b.log_); }
  friend LogGroup operator-(const LogGroup& a, const LogGroup& b) { return LogGroup(a.log_ - b.log_); }
  LogGroup operator-() const { return LogGroup(-log_); }
  LogGroup& operator+=(const LogGroup& b) { return *this = *this + b; }
  LogGroup& operator-=(const LogGroup& b) { return *this = *this - b; }
  friend LogGroup operator*(const LogGroup& a, const Fp61& k) { return LogGroup(a.log_ * k); }

 private:
  Fp61 log_;
};

}  // namespace debug

struct DebugBackend {
  static constexpr std::string_view kName = "debug";

  using Scalar = debug::Fp61;
  using G1 = debug::LogGroup<1>;
  using G2 = debug::LogGroup<2>;
  using GT = debug::LogGroup<3>;
  using PreparedG2 = G2;

  static constexpr std::size_t kG1Bytes = 8;
  static constexpr std::size_t kG2Bytes = 8;

  static G1 g1() { return G1(Scalar::one()); }
  static G2 g2() { return G2(Scalar::one()); }
  static PreparedG2 prepare(const G2& q) { return q; }

  static GT pairing(const G1& p, const G2& q) { return GT(p.log() * q.log()); }
  static GT gt_mul(const GT& a, const GT& b) { return a + b; }
  static GT gt_pow(const GT& a, const Scalar& k) { return a * k; }
  static std::vector<uint8_t> encode_gt(const GT& a) {
    auto b = a.log().to_bytes();
    return {b.begin(), b.end()};
  }

  static bool pairing_eq(const G1& a, const G2& b, const G1& c, const G2& d) {
    return a.log() * b.log() == c.log() * d.log();
  }

  static std::array<uint8_t, kG1Bytes> encode_g1(const G1& p) { return p.log().to_bytes(); }
  static std::optional<G1> decode_g1(std::span<const uint8_t> in) {
    auto v = Scalar::from_bytes(in);
    if (!v) return std::nullopt;
    return G1(*v);
  }
  static std::array<uint8_t, kG2Bytes> encode_g2(const G2& q) { return q.log().to_bytes(); }
  static std::optional<G2> decode_g2(std::span<const uint8_t> in) {
    auto v = Scalar::from_bytes(in);
    if (!v) return std::nullopt;
    return G2(*v);
  }
};

template <class B>
concept GroupBackend = requires(const typename B::G1& a, const typename B::G2& q,
                                const typename B::Scalar& k) {
  { B::g1() } -> std::same_as<typename B::G1>;
  { B::g2() } -> std::same_as<typename B::G2>;
  { a * k } -> std::same_as<typename B::G1>;
  { a + a } -> std::same_as<typename B::G1>;
  { q * k } -> std::same_as<typename B::G2>;
  { B::prepare(q) } -> std::same_as<typename B::PreparedG2>;
  { B::pairing(a, q) } -> std::same_as<typename B::GT>;
  { B::encode_g1(a) };
  { B::decode_g1(std::span<const uint8_t>{}) } -> std::same_as<std::optional<typename B::G1>>;
};

}  // namespace biscotti::crypto
