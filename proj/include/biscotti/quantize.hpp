#pragma once

// Fixed-point bridge between real vectors and field-element polynomials.
// Coefficient 0 carries a blinding value; coefficients 1..d hold
// round(v_j * 2^scale_bits) reduced mod p, with negative values mapped to
// p - |x| and read back through the centered representative.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "biscotti/error.hpp"

namespace biscotti {

struct QuantizeConfig {
  int scale_bits = 20;
  /// Encodings must stay below p / (2 headroom) so that sums of up to
  /// `headroom` of them cannot wrap around.
  double headroom = 1 << 16;
};

template <class F>
struct QuantizedPoly {
  std::vector<F> coeffs;
  int scale_bits = 20;

  std::size_t update_dim() const { return coeffs.empty() ? 0 : coeffs.size() - 1; }

  friend bool operator==(const QuantizedPoly&, const QuantizedPoly&) = default;

  /// Coefficient-wise field sum.
  QuantizedPoly& operator+=(const QuantizedPoly& o) {
    if (o.coeffs.size() != coeffs.size() || o.scale_bits != scale_bits)
      throw InvalidArgument("polynomial shape mismatch");
    for (std::size_t j = 0; j < coeffs.size(); ++j) coeffs[j] += o.coeffs[j];
    return *this;
  }
  friend QuantizedPoly operator+(QuantizedPoly a, const QuantizedPoly& b) { return a += b; }

  QuantizedPoly operator-() const {
    QuantizedPoly r = *this;
    for (auto& c : r.coeffs) c = -c;
    return r;
  }

  static QuantizedPoly zero(std::size_t d, int scale_bits) { return {std::vector<F>(d + 1, F::zero()), scale_bits}; }
};

namespace detail {

template <class F>
double modulus_as_double() {
  auto m = F::modulus();
  long double acc = 0;
  for (std::size_t i = m.size(); i-- > 0;) acc = acc * 18446744073709551616.0L + (long double)m[i];
  return double(acc);
}

}  // namespace detail

/// Largest |round(v 2^scale_bits)| accepted by encode.
template <class F>
double quantize_bound(const QuantizeConfig& cfg) {
  double b = detail::modulus_as_double<F>() / (2.0 * cfg.headroom);
  return std::min(b, 9.0e18);
}

template <class F>
F encode_scalar(double v, const QuantizeConfig& cfg) {
  if (!std::isfinite(v)) throw InvalidArgument("cannot encode a non-finite value");
  double scaled = std::nearbyint(std::ldexp(v, cfg.scale_bits));
  if (std::fabs(scaled) >= quantize_bound<F>(cfg)) throw OverflowError("value exceeds the quantization headroom");
  return F::from_i64(int64_t(scaled));
}

template <class F>
double decode_scalar(const F& c, int scale_bits) {
  if (auto i = c.to_centered_i64()) return std::ldexp(double(*i), -scale_bits);
  return std::ldexp(c.to_centered_double(), -scale_bits);
}

template <class F>
QuantizedPoly<F> encode(std::span<const double> v, const F& blinding, const QuantizeConfig& cfg = {}) {
  QuantizedPoly<F> q{std::vector<F>(v.size() + 1), cfg.scale_bits};
  q.coeffs[0] = blinding;
  for (std::size_t j = 0; j < v.size(); ++j) q.coeffs[j + 1] = encode_scalar<F>(v[j], cfg);
  return q;
}

/// Real vector of length d; the blinding slot is dropped.
template <class F>
std::vector<double> decode(const QuantizedPoly<F>& q) {
  std::vector<double> out(q.update_dim());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = decode_scalar(q.coeffs[j + 1], q.scale_bits);
  return out;
}

/// Rounds each entry to the quantization grid without leaving the reals.
inline std::vector<double> round_to_grid(std::span<const double> v, int scale_bits) {
  std::vector<double> out(v.size());
  for (std::size_t j = 0; j < v.size(); ++j)
    out[j] = std::ldexp(std::nearbyint(std::ldexp(v[j], scale_bits)), -scale_bits);
  return out;
}

}  // namespace biscotti
