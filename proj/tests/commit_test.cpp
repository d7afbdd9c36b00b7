#include <gtest/gtest.h>

#include <vector>

#include "biscotti/commit.hpp"
#include "biscotti/quantize.hpp"

using namespace biscotti;
using biscotti::crypto::Bn254Backend;
using biscotti::crypto::DebugBackend;

TEST(Quantize, KnownEncodings) {
  using F = crypto::bn254::Fr;
  std::vector<double> half{0.5}, neg{-0.5};
  auto q = encode<F>(half, F::zero());
  EXPECT_EQ(q.coeffs[1], F::from_u64(524288));
  auto n = encode<F>(neg, F::zero());
  EXPECT_EQ(n.coeffs[1], F::zero() - F::from_u64(524288));
  EXPECT_TRUE(n.coeffs[1].is_negative());
  std::vector<double> zeros(4, 0.0);
  for (auto& c : encode<F>(zeros, F::zero()).coeffs) EXPECT_TRUE(c.is_zero());
}

TEST(Quantize, RoundTripAndAdditivity) {
  using F = crypto::debug::Fp61;
  Rng rng(8);
  QuantizeConfig cfg;
  const double tol = std::ldexp(1.0, -cfg.scale_bits - 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(10), b(10);
    for (auto& v : a) v = rng.gaussian(0, 2);
    for (auto& v : b) v = rng.gaussian(0, 2);
    auto qa = encode<F>(a, F::random(rng), cfg), qb = encode<F>(b, F::random(rng), cfg);
    auto da = decode(qa), db = decode(qb), dsum = decode(qa + qb);
    auto ga = round_to_grid(a, cfg.scale_bits), gb = round_to_grid(b, cfg.scale_bits);
    for (std::size_t j = 0; j < a.size(); ++j) {
      EXPECT_LE(std::fabs(da[j] - a[j]), tol);
      EXPECT_EQ(da[j], ga[j]);
      EXPECT_EQ(dsum[j], ga[j] + gb[j]);
    }
    EXPECT_EQ(encode<F>(da, qa.coeffs[0], cfg), qa);
  }
}

TEST(Quantize, SumOfManyUnitUpdates) {
  using F = crypto::debug::Fp61;
  Rng rng(21);
  const std::size_t d = 25;
  QuantizedPoly<F> acc = QuantizedPoly<F>::zero(d, 20);
  std::vector<double> real(d, 0.0);
  for (int i = 0; i < 35; ++i) {
    std::vector<double> v(d);
    double n = 0;
    for (auto& x : v) {
      x = rng.gaussian();
      n += x * x;
    }
    for (auto& x : v) x /= std::sqrt(n);
    acc += encode<F>(v, F::random(rng));
    for (std::size_t j = 0; j < d; ++j) real[j] += v[j];
  }
  auto dec = decode(acc);
  for (std::size_t j = 0; j < d; ++j) EXPECT_LE(std::fabs(dec[j] - real[j]), 35 * std::ldexp(1.0, -21));
}

TEST(Quantize, OverflowRejected) {
  using F = crypto::debug::Fp61;
  QuantizeConfig cfg;
  double limit = quantize_bound<F>(cfg) / std::ldexp(1.0, cfg.scale_bits);
  std::vector<double> ok{limit * 0.99}, bad{limit * 1.01}, nan{std::nan("")};
  EXPECT_NO_THROW(encode<F>(ok, F::zero(), cfg));
  EXPECT_THROW(encode<F>(bad, F::zero(), cfg), OverflowError);
  EXPECT_THROW(encode<F>(nan, F::zero(), cfg), InvalidArgument);
}

template <class B>
class CommitTest : public ::testing::Test {};
using Backends = ::testing::Types<DebugBackend, Bn254Backend>;
TYPED_TEST_SUITE(CommitTest, Backends);

namespace {

template <class B>
QuantizedPoly<typename B::Scalar> random_poly(std::size_t d, Rng& rng) {
  using F = typename B::Scalar;
  std::vector<double> v(d);
  for (auto& x : v) x = rng.gaussian(0, 0.3);
  return encode<F>(v, F::random(rng));
}

template <class B>
QuantizedPoly<typename B::Scalar> small_poly(std::initializer_list<int64_t> cs) {
  using F = typename B::Scalar;
  QuantizedPoly<F> q;
  for (auto c : cs) q.coeffs.push_back(F::from_i64(c));
  return q;
}

}  // namespace

TYPED_TEST(CommitTest, SetupConsistency) {
  using B = TypeParam;
  auto pk = trusted_setup<B>(25, 7, 4);
  ASSERT_EQ(pk.powers.size(), 26u);
  auto g2a = B::prepare(pk.g2_alpha);
  for (std::size_t j = 0; j + 1 < pk.powers.size(); ++j)
    EXPECT_TRUE(B::pairing_eq(pk.powers[j + 1], pk.g2_prepared, pk.powers[j], g2a));
  auto again = trusted_setup<B>(25, 7, 4);
  EXPECT_EQ(again.powers, pk.powers);
  EXPECT_EQ(again.g2_alpha, pk.g2_alpha);
  EXPECT_NE(trusted_setup<B>(25, 8).powers[1], pk.powers[1]);
}

TYPED_TEST(CommitTest, Homomorphism) {
  using B = TypeParam;
  Rng rng(2);
  auto pk = trusted_setup<B>(8, 1);
  auto zero = QuantizedPoly<typename B::Scalar>::zero(8, 20);
  EXPECT_TRUE(commit(pk, zero).value.is_identity());
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_poly<B>(8, rng), b = random_poly<B>(8, rng);
    auto ca = commit(pk, a), cb = commit(pk, b);
    std::vector<Commitment<B>> both{ca, cb}, rev{cb, ca};
    EXPECT_EQ(combine<B>(both), commit(pk, a + b));
    EXPECT_EQ(combine<B>(rev), combine<B>(both));
    EXPECT_TRUE((ca.value + commit(pk, -a).value).is_identity());
  }
  std::vector<Commitment<B>> empty;
  EXPECT_THROW(combine<B>(empty), InvalidArgument);
  EXPECT_THROW(commit(pk, random_poly<B>(9, rng)), InvalidArgument);
}

TYPED_TEST(CommitTest, HandDivision) {
  using B = TypeParam;
  using F = typename B::Scalar;
  auto phi = small_poly<B>({3, 2, 1});
  F rem;
  auto q = divide_by_linear<F>(phi.coeffs, F::from_u64(2), rem);
  ASSERT_EQ(q.size(), 2u);
  EXPECT_EQ(q[0], F::from_u64(4));
  EXPECT_EQ(q[1], F::from_u64(1));
  EXPECT_EQ(rem, F::from_u64(11));

  auto pk = trusted_setup<B>(4, 3, 6);
  auto w = create_witness(pk, phi, F::from_u64(2));
  EXPECT_EQ(w.eval, F::from_u64(11));
  EXPECT_EQ(w.value, commit(pk, small_poly<B>({4, 1})).value);
  EXPECT_TRUE(verify_share(pk, commit(pk, phi), w));

  auto c = small_poly<B>({5});
  auto wc = create_witness(pk, c, F::from_u64(3));
  EXPECT_TRUE(wc.value.is_identity());
  EXPECT_EQ(wc.eval, F::from_u64(5));
  EXPECT_THROW(create_witness(pk, phi, F::zero()), InvalidArgument);
}

TYPED_TEST(CommitTest, TableWitnessMatchesDivision) {
  using B = TypeParam;
  using F = typename B::Scalar;
  Rng rng(5);
  auto pk = trusted_setup<B>(25, 9, 52);
  auto phi = random_poly<B>(25, rng);
  auto c = commit(pk, phi);
  for (uint64_t z = 1; z <= 52; z += (std::is_same_v<B, Bn254Backend> ? 17 : 1)) {
    auto fast = create_witness(pk, phi, F::from_u64(z));
    auto slow = create_witness_by_division(pk, phi, F::from_u64(z));
    EXPECT_EQ(fast, slow);
    EXPECT_TRUE(verify_share(pk, c, fast));
  }
  auto far = create_witness(pk, phi, F::from_u64(1000));
  EXPECT_TRUE(verify_share(pk, c, far));
}

TYPED_TEST(CommitTest, TamperRejected) {
  using B = TypeParam;
  using F = typename B::Scalar;
  Rng rng(11);
  auto pk = trusted_setup<B>(6, 4, 14);
  const int trials = std::is_same_v<B, Bn254Backend> ? 25 : 1000;
  for (int t = 0; t < trials; ++t) {
    auto phi = random_poly<B>(6, rng), other = random_poly<B>(6, rng);
    auto c = commit(pk, phi);
    F z = F::from_u64(1 + rng.below(14));
    auto w = create_witness(pk, phi, z);
    ASSERT_TRUE(verify_share(pk, c, w));
    auto bad_eval = w;
    bad_eval.eval += F::one();
    EXPECT_FALSE(verify_share(pk, c, bad_eval));
    EXPECT_FALSE(verify_share(pk, c, create_witness(pk, other, z)));
    EXPECT_FALSE(verify_share(pk, commit(pk, other), w));
    auto moved = w;
    moved.point += F::one();
    EXPECT_FALSE(verify_share(pk, c, moved));
    EXPECT_NE(commit(pk, other), c);
  }
}
