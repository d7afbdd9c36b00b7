#pragma once

// Short Weierstrass curve y^2 = x^3 + b (a = 0) in Jacobian coordinates,
// generic over the coordinate field so G1 and G2 share one implementation.

#include <utility>

#include "biscotti/error.hpp"

namespace biscotti::crypto {

template <class Curve, class Scalar>
class CurvePoint {
 public:
  using Field = typename Curve::Field;

  CurvePoint() : x_(Field::one()), y_(Field::one()), z_(Field::zero()) {}

  static CurvePoint identity() { return CurvePoint(); }

  static CurvePoint from_affine(const Field& x, const Field& y) {
    CurvePoint p;
    p.x_ = x;
    p.y_ = y;
    p.z_ = Field::one();
    if (!p.on_curve()) throw InvalidArgument("point is not on the curve");
    return p;
  }

  bool is_identity() const { return z_.is_zero(); }

  bool on_curve() const {
    if (is_identity()) return true;
    // Y^2 = X^3 + b Z^6
    Field z2 = z_.square();
    Field z6 = z2.square() * z2;
    return y_.square() == x_.square() * x_ + Curve::b() * z6;
  }

  std::pair<Field, Field> to_affine() const {
    if (is_identity()) throw InvalidArgument("identity has no affine coordinates");
    Field zi = z_.inverse();
    Field zi2 = zi.square();
    return {x_ * zi2, y_ * zi2 * zi};
  }

  friend bool operator==(const CurvePoint& a, const CurvePoint& b) {
    if (a.is_identity() || b.is_identity()) return a.is_identity() == b.is_identity();
    Field az2 = a.z_.square(), bz2 = b.z_.square();
    if (!(a.x_ * bz2 == b.x_ * az2)) return false;
    return a.y_ * bz2 * b.z_ == b.y_ * az2 * a.z_;
  }

  CurvePoint operator-() const {
    CurvePoint r = *this;
    r.y_ = -r.y_;
    return r;
  }

  CurvePoint dbl() const {
    if (is_identity()) return *this;
    // dbl-2009-l
    Field a = x_.square();
    Field b = y_.square();
    Field c = b.square();
    Field t = x_ + b;
    Field d = (t.square() - a - c).dbl();
    Field e = a.dbl() + a;
    Field f = e.square();
    CurvePoint r;
    r.x_ = f - d.dbl();
    r.y_ = e * (d - r.x_) - c.dbl().dbl().dbl();
    r.z_ = (y_ * z_).dbl();
    return r;
  }

  friend CurvePoint operator+(const CurvePoint& p, const CurvePoint& q) {
    if (p.is_identity()) return q;
    if (q.is_identity()) return p;
    // add-2007-bl
    Field z1z1 = p.z_.square();
    Field z2z2 = q.z_.square();
    Field u1 = p.x_ * z2z2;
    Field u2 = q.x_ * z1z1;
    Field s1 = p.y_ * q.z_ * z2z2;
    Field s2 = q.y_ * p.z_ * z1z1;
    if (u1 == u2) {
      if (s1 == s2) return p.dbl();
      return identity();
    }
    Field h = u2 - u1;
    Field i = h.dbl().square();
    Field j = h * i;
    Field rr = (s2 - s1).dbl();
    Field v = u1 * i;
    CurvePoint r;
    r.x_ = rr.square() - j - v.dbl();
    r.y_ = rr * (v - r.x_) - (s1 * j).dbl();
    r.z_ = ((p.z_ + q.z_).square() - z1z1 - z2z2) * h;
    return r;
  }

  friend CurvePoint operator-(const CurvePoint& p, const CurvePoint& q) { return p + (-q); }
  CurvePoint& operator+=(const CurvePoint& q) { return *this = *this + q; }
  CurvePoint& operator-=(const CurvePoint& q) { return *this = *this - q; }

  /// Scalar multiplication. Scalars in the upper half of the field are
  /// handled as negatives, which keeps small signed values cheap.
  friend CurvePoint operator*(const CurvePoint& p, const Scalar& k) {
    if (k.is_negative()) return -(p * (-k));
    auto e = k.to_canonical();
    constexpr int kWindow = 4;
    std::size_t bits = 0;
    for (std::size_t i = e.size(); i-- > 0;)
      if (e[i]) {
        bits = 64 * i + 64 - std::size_t(__builtin_clzll(e[i]));
        break;
      }
    if (bits == 0) return identity();
    if (bits <= 16) {
      CurvePoint r;
      for (std::size_t i = bits; i-- > 0;) {
        r = r.dbl();
        if ((e[i / 64] >> (i % 64)) & 1) r += p;
      }
      return r;
    }
    CurvePoint table[1 << kWindow];
    table[0] = identity();
    for (int i = 1; i < (1 << kWindow); ++i) table[i] = table[i - 1] + p;
    std::size_t windows = (bits + kWindow - 1) / kWindow;
    CurvePoint r;
    for (std::size_t w = windows; w-- > 0;) {
      for (int s = 0; s < kWindow; ++s) r = r.dbl();
      std::size_t pos = w * kWindow;
      unsigned idx = 0;
      for (int s = 0; s < kWindow; ++s) {
        std::size_t b = pos + std::size_t(s);
        if (b < 64 * e.size() && ((e[b / 64] >> (b % 64)) & 1)) idx |= 1u << s;
      }
      if (idx) r += table[idx];
    }
    return r;
  }

  const Field& x() const { return x_; }
  const Field& y() const { return y_; }
  const Field& z() const { return z_; }

 private:
  Field x_, y_, z_;
};

}  // namespace biscotti::crypto
