#include <gtest/gtest.h>

#include "biscotti/vss.hpp"

using namespace biscotti;
using crypto::Bn254Backend;
using crypto::DebugBackend;

template <class B>
class VssTest : public ::testing::Test {};
using Backends = ::testing::Types<DebugBackend, Bn254Backend>;
TYPED_TEST_SUITE(VssTest, Backends);

namespace {

template <class B>
QuantizedPoly<typename B::Scalar> random_update(std::size_t d, Rng& rng) {
  using F = typename B::Scalar;
  std::vector<double> v(d);
  for (auto& x : v) x = rng.gaussian(0, 0.2);
  return encode<F>(v, F::random(rng));
}

struct Verifiers {
  std::vector<PeerId> ids{100, 101, 102};
  std::vector<crypto::SigningKey> keys;
  PublicKeys pubs;
  Verifiers() {
    for (PeerId p : ids) {
      keys.push_back(crypto::SigningKey::from_seed(crypto::sha256("verifier" + std::to_string(p))));
      pubs[p] = keys.back().public_key();
    }
  }
  template <class B>
  void sign(ShareBundle<B>& b, std::size_t count) const {
    auto msg = approval_message<B>(b.iteration, b.round, b.dealer, b.commitment);
    for (std::size_t i = 0; i < count; ++i) b.signatures.push_back({ids[i], keys[i].sign(msg)});
  }
};

}  // namespace

TEST(Vss, RoundRobinCounts) {
  EXPECT_EQ(assigned_points(0, 3, 52).size(), 18u);
  EXPECT_EQ(assigned_points(1, 3, 52).size(), 17u);
  EXPECT_EQ(assigned_points(2, 3, 52).size(), 17u);
  EXPECT_EQ(assigned_points(1, 3, 52).front(), 2u);
}

TEST(Vss, HandInterpolation) {
  using F = DebugBackend::Scalar;
  std::vector<F> xs{F::from_u64(1), F::from_u64(2), F::from_u64(3)};
  std::vector<F> ys{F::from_u64(6), F::from_u64(11), F::from_u64(18)};
  auto c = interpolate<F>(xs, ys);
  EXPECT_EQ(c, (std::vector<F>{F::from_u64(3), F::from_u64(2), F::from_u64(1)}));
}

TYPED_TEST(VssTest, DealAndAccept) {
  using B = TypeParam;
  Rng rng(1);
  const std::size_t d = 5;
  auto pk = trusted_setup<B>(d, 3, 2 * (d + 1));
  auto phi = random_update<B>(d, rng);
  std::vector<PeerId> aggs{7, 8, 9};
  auto bundles = deal_shares(phi, pk, 2 * (d + 1), aggs, 42, 0, 0);
  ASSERT_EQ(bundles.size(), 3u);
  EXPECT_EQ(bundles[7].shares.size(), 4u);
  Verifiers v;
  for (auto& [a, b] : bundles) {
    for (auto& w : b.shares) EXPECT_TRUE(verify_share(pk, b.commitment, w));
    EXPECT_FALSE(accept_bundle(b, v.ids, pk, v.pubs));
    v.sign(b, 1);
    EXPECT_FALSE(accept_bundle(b, v.ids, pk, v.pubs));
    v.sign(b, 2);
    EXPECT_TRUE(accept_bundle(b, v.ids, pk, v.pubs));
  }
  auto forged = bundles[8];
  forged.shares[1].eval += B::Scalar::one();
  EXPECT_FALSE(accept_bundle(forged, v.ids, pk, v.pubs));
  auto dup = bundles[9];
  dup.signatures.assign(3, dup.signatures[0]);
  EXPECT_FALSE(accept_bundle(dup, v.ids, pk, v.pubs));
  std::vector<PeerId> lone{7};
  EXPECT_THROW(deal_shares(phi, pk, 2 * (d + 1), lone), InvalidArgument);
}

TYPED_TEST(VssTest, TwoUpdateSumAtPointOne) {
  using B = TypeParam;
  using F = typename B::Scalar;
  auto pk = trusted_setup<B>(1, 4, 4);
  QuantizedPoly<F> p1{{F::from_u64(1), F::from_u64(1)}, 20}, p2{{F::from_u64(2), F::from_u64(3)}, 20};
  std::vector<PeerId> aggs{0, 1};
  auto b1 = deal_shares(p1, pk, 4, aggs), b2 = deal_shares(p2, pk, 4, aggs);
  std::vector<ShareBundle<B>> at0{b1[0], b2[0]};
  auto sums = sum_shares<B>(at0);
  ASSERT_EQ(sums[0].point, F::from_u64(1));
  EXPECT_EQ(sums[0].summed_eval, F::from_u64(7));
  EXPECT_EQ(sums[0].contributor_count, 2u);
  std::vector<Commitment<B>> cs{b1[0].commitment, b2[0].commitment};
  for (auto& s : sums) EXPECT_TRUE(verify_share(pk, combine<B>(cs), s.as_witness()));
  std::vector<ShareBundle<B>> mixed{b1[0], b2[1]};
  EXPECT_THROW(sum_shares<B>(mixed), InvalidArgument);
}

TYPED_TEST(VssTest, ThresholdAndExactRecovery) {
  using B = TypeParam;
  Rng rng(9);
  const std::size_t d = std::is_same_v<B, Bn254Backend> ? 6 : 25;
  const std::size_t n = 2 * (d + 1);
  auto pk = trusted_setup<B>(d, 5, n);
  std::vector<PeerId> aggs{0, 1, 2};
  const std::size_t u = std::is_same_v<B, Bn254Backend> ? 5 : 35;
  std::map<PeerId, std::vector<ShareBundle<B>>> per_agg;
  std::vector<Commitment<B>> cs;
  QuantizedPoly<typename B::Scalar> expect = QuantizedPoly<typename B::Scalar>::zero(d, 20);
  for (std::size_t i = 0; i < u; ++i) {
    auto phi = random_update<B>(d, rng);
    expect += phi;
    auto bundles = deal_shares(phi, pk, n, aggs, PeerId(i));
    cs.push_back(bundles[0].commitment);
    for (auto& [a, b] : bundles) per_agg[a].push_back(b);
  }
  auto combined = combine<B>(cs);
  std::vector<AggregateShare<B>> all;
  for (auto& [a, bs] : per_agg) {
    auto sums = sum_shares<B>(bs);
    for (auto& s : sums) {
      EXPECT_TRUE(verify_share(pk, combined, s.as_witness()));
      all.push_back(s);
    }
  }
  std::vector<AggregateShare<B>> exact(all.begin(), all.begin() + std::ptrdiff_t(d + 1));
  EXPECT_EQ(recover_aggregate<B>(exact, pk, combined), expect);
  EXPECT_EQ(recover_aggregate<B>(all, pk, combined), expect);
  std::vector<AggregateShare<B>> short_by_one(all.begin(), all.begin() + std::ptrdiff_t(d));
  EXPECT_THROW(recover_aggregate<B>(short_by_one, pk, combined), InvalidArgument);
  auto tampered = all;
  tampered.back().summed_eval += B::Scalar::one();
  EXPECT_THROW(recover_aggregate<B>(tampered, pk, combined), ConsistencyError);
}

TYPED_TEST(VssTest, SingleUpdateAnySubset) {
  using B = TypeParam;
  Rng rng(10);
  const std::size_t d = 4, n = 10;
  auto pk = trusted_setup<B>(d, 6, n);
  auto phi = random_update<B>(d, rng);
  std::vector<PeerId> aggs{0, 1};
  auto bundles = deal_shares(phi, pk, n, aggs);
  std::vector<AggregateShare<B>> all;
  for (auto& [a, b] : bundles) {
    std::vector<ShareBundle<B>> one{b};
    for (auto& s : sum_shares<B>(one)) all.push_back(s);
  }
  for (int trial = 0; trial < 5; ++trial) {
    for (std::size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[rng.below(i)]);
    std::vector<AggregateShare<B>> pick(all.begin(), all.begin() + std::ptrdiff_t(d + 1));
    EXPECT_EQ(recover_aggregate<B>(pick, pk, bundles[0].commitment), phi);
  }
}

TYPED_TEST(VssTest, WireRoundTrip) {
  using B = TypeParam;
  Rng rng(12);
  auto pk = trusted_setup<B>(3, 7, 8);
  std::vector<PeerId> aggs{0, 1};
  auto bundles = deal_shares(random_update<B>(3, rng), pk, 8, aggs, 5, 2, 1);
  Verifiers v;
  v.sign(bundles[1], 3);
  ByteWriter w;
  write_bundle(w, bundles[1]);
  auto bytes = w.take();
  ByteReader r(bytes);
  EXPECT_EQ(read_bundle<B>(r), bundles[1]);
  r.expect_done();
  bytes.resize(bytes.size() - 3);
  ByteReader cut(bytes);
  EXPECT_THROW(read_bundle<B>(cut), ParseError);
}
