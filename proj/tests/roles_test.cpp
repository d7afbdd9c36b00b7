#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include "biscotti/roles.hpp"

using namespace biscotti;

namespace {

crypto::Digest seed_bytes(uint64_t i) { return crypto::Sha256().update("seed").update_u64(i).finish(); }

StakeMap uniform(std::size_t n, uint64_t s = 10) {
  StakeMap m;
  for (PeerId p = 0; p < n; ++p) m[p] = s;
  return m;
}

}  // namespace

TEST(StakeRing, SinglePeerOwnsEverything) {
  StakeRing ring(StakeMap{{7, 3}});
  for (uint64_t i = 0; i < 50; ++i) EXPECT_EQ(ring.owner_of(seed_bytes(i)), 7u);
  crypto::Digest top;
  top.fill(0xff);
  EXPECT_EQ(ring.owner_of(top), 7u);
}

TEST(StakeRing, IntervalArithmetic) {
  StakeRing ring(StakeMap{{0, 10}, {1, 10}, {2, 20}});
  auto [lo, hi] = ring.interval(2);
  EXPECT_EQ(hi - lo, ring.total() / 2);
  crypto::Digest half{};
  half[0] = 0x80;  // exactly 2^255
  EXPECT_EQ(ring.owner_of(half), 2u);
  crypto::Digest below_half;
  below_half.fill(0xff);
  below_half[0] = 0x7f;
  EXPECT_EQ(ring.owner_of(below_half), 1u);
  EXPECT_THROW(StakeRing(StakeMap{{0, 0}}), InvalidArgument);
}

TEST(StakeRing, ProportionalSelection) {
  StakeMap stake{{0, 10}, {1, 20}, {2, 30}, {3, 15}, {4, 25}};
  StakeRing ring(stake);
  std::map<PeerId, double> hits;
  crypto::Digest h = seed_bytes(0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    h = crypto::sha256(h);
    hits[ring.owner_of(h)] += 1;
  }
  double chi = 0;
  for (auto [p, s] : stake) {
    double expect = n * double(s) / double(ring.total());
    chi += (hits[p] - expect) * (hits[p] - expect) / expect;
  }
  boost::math::chi_squared dist(double(stake.size() - 1));
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi)), 0.01);
}

TEST(Committee, DeterministicDistinctAndComplete) {
  StakeRing ring(uniform(10));
  auto s = seed_bytes(1);
  auto a = draw_committee(ring, s, 3), b = draw_committee(ring, s, 3);
  EXPECT_EQ(a, b);
  std::set<PeerId> uniq(a.committee.begin(), a.committee.end());
  EXPECT_EQ(uniq.size(), 3u);
  auto all = draw_committee(ring, s, 10);
  std::set<PeerId> every(all.committee.begin(), all.committee.end());
  EXPECT_EQ(every.size(), 10u);
  EXPECT_THROW(draw_committee(ring, s, 11), InvalidArgument);
}

TEST(Committee, UniformFrequency) {
  StakeRing ring(uniform(100));
  std::vector<int> count(100, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i)
    for (PeerId p : draw_committee(ring, seed_bytes(uint64_t(i)), 3).committee) ++count[p];
  for (int c : count) EXPECT_NEAR(double(c) / draws, 0.03, 0.01);
}

TEST(Committee, SeedsSeparateRolesAndBlocks) {
  crypto::PublicKey g{};
  g[0] = 1;
  crypto::Digest prev = seed_bytes(5), next = seed_bytes(6);
  EXPECT_NE(committee_seed(g, prev, kVerifyRole, 0), committee_seed(g, prev, kAggregateRole, 0));
  EXPECT_NE(committee_seed(g, prev, kVerifyRole, 0), committee_seed(g, next, kVerifyRole, 0));
  EXPECT_NE(committee_seed(g, prev, kVerifyRole, 0), committee_seed(g, prev, kVerifyRole, 1));
  auto k1 = crypto::SigningKey::from_seed(seed_bytes(10)), k2 = crypto::SigningKey::from_seed(seed_bytes(11));
  EXPECT_NE(noiser_seed(k1.public_key(), prev, 3), noiser_seed(k2.public_key(), prev, 3));
}

TEST(Vrf, KeyedDrawVerifiesAndRejectsTampering) {
  StakeMap stake = uniform(20);
  StakeRing ring(stake);
  auto key = crypto::SigningKey::from_seed(seed_bytes(42));
  auto seed = noiser_seed(key.public_key(), seed_bytes(1), 0);
  auto out = keyed_draw(key, 4, ring, seed, 3);
  EXPECT_TRUE(verify_vrf(key.public_key(), 4, seed, out, stake));
  EXPECT_EQ(std::count(out.committee.begin(), out.committee.end(), 4u), 0);

  auto swapped = out;
  for (PeerId p = 0; p < 20; ++p)
    if (std::find(out.committee.begin(), out.committee.end(), p) == out.committee.end() && p != 4) {
      swapped.committee[1] = p;
      break;
    }
  EXPECT_FALSE(verify_vrf(key.public_key(), 4, seed, swapped, stake));

  StakeMap stale = stake;
  stale[0] = 400;
  EXPECT_FALSE(verify_vrf(key.public_key(), 4, seed, out, stale));

  auto other = crypto::SigningKey::from_seed(seed_bytes(43));
  EXPECT_FALSE(verify_vrf(other.public_key(), 4, seed, out, stake));
  auto wrong_seed = noiser_seed(key.public_key(), seed_bytes(2), 0);
  EXPECT_FALSE(verify_vrf(key.public_key(), 4, wrong_seed, out, stake));
}

TEST(Vrf, PublicCommitteeVerifies) {
  StakeMap stake = uniform(30);
  crypto::PublicKey g{};
  auto seed = committee_seed(g, seed_bytes(3), kVerifyRole, 0);
  auto out = draw_committee(StakeRing(stake), seed, 3);
  EXPECT_TRUE(verify_committee(seed, out, stake));
  auto bad = out;
  std::swap(bad.committee[0], bad.committee[1]);
  EXPECT_FALSE(verify_committee(seed, bad, stake));
  StakeMap stale = stake;
  stale[0] = 1000;
  EXPECT_FALSE(verify_committee(seed, out, stale));
}

TEST(Stake, LinearIncrement) {
  StakeMap s = uniform(5);
  std::vector<PeerId> none;
  EXPECT_EQ(update_stake(s, none, none), s);
  std::vector<PeerId> contrib{0, 2}, committee{2, 4};
  auto next = update_stake(s, contrib, committee);
  EXPECT_EQ(next[0], 15u);
  EXPECT_EQ(next[1], 10u);
  EXPECT_EQ(next[2], 15u);
  EXPECT_EQ(next[4], 15u);
  for (auto [p, v] : next) EXPECT_GE(v, s[p]);
  std::vector<PeerId> unknown{9};
  EXPECT_THROW(update_stake(s, unknown, none), InvalidArgument);
}
