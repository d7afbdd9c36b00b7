#include <gtest/gtest.h>

#include <filesystem>

#include "biscotti/ledger.hpp"

using namespace biscotti;
using crypto::DebugBackend;
using B = DebugBackend;
using F = B::Scalar;

namespace {

GenesisParams small_params() {
  GenesisParams p;
  p.shape = {ml::ModelKind::LogReg, 4, 2};
  p.T = 8;
  p.peers = 12;
  p.sample_size = 6;
  p.krum_f = 1;
  p.updates_per_block = 4;
  return p;
}

const GenesisBundle<B>& fixture() {
  static const auto g = build_genesis<B>(small_params(), 77);
  return g;
}

// Builds a valid successor of the ledger tip from `count` eligible peers.
Block<B> make_block(const Ledger<B>& ledger, std::size_t count, uint64_t round, uint64_t salt = 0) {
  const auto& g = ledger.genesis();
  const auto& secrets = fixture().secrets;
  auto cm = committees_for(g, ledger.stake(), ledger.tip_hash(), round);
  Rng rng(derive_seed(salt, {ledger.height(), round}));
  std::vector<CommitmentEntry<B>> entries;
  auto agg = QuantizedPoly<F>::zero(g.shape.dim(), g.quant.scale_bits);
  for (PeerId p = 0; p < g.peer_keys.size() && entries.size() < count; ++p) {
    if (cm.contains(p)) continue;
    std::vector<double> v(g.shape.dim());
    for (auto& x : v) x = rng.gaussian(0, 0.1);
    auto poly = encode<F>(v, F::random(rng), g.quant);
    CommitmentEntry<B> e{p, commit(*g.pk, poly), {}};
    auto msg = approval_message<B>(ledger.height(), round, p, e.commitment);
    for (PeerId vf : cm.verifiers) e.approvals.push_back({vf, secrets[vf].key.sign(msg)});
    entries.push_back(e);
    agg += poly;
  }
  auto b = assemble_block(ledger.tip(), round, entries, agg);
  PeerId a = cm.aggregators.front();
  b.aggregator_sigs.push_back(sign_block_hash(block_hash(b), secrets[a].key, a));
  return b;
}

void resign(const Ledger<B>& ledger, Block<B>& b) {
  auto cm = committees_for(ledger.genesis(), ledger.stake(), ledger.tip_hash(), b.round);
  PeerId a = cm.aggregators.front();
  b.aggregator_sigs = {sign_block_hash(block_hash(b), fixture().secrets[a].key, a)};
}

}  // namespace

TEST(Ledger, GenesisHashIsStable) {
  Ledger<B> l(fixture().genesis);
  EXPECT_EQ(l.height(), 0u);
  EXPECT_EQ(crypto::to_hex(l.tip_hash()), "1f008643c4e39b1753bc305206dcfb54c709b3addebf5352ed7c355a247fbf64");
}

TEST(Ledger, GenesisIsDeterministic) {
  auto again = build_genesis<B>(small_params(), 77);
  EXPECT_EQ(again.genesis->peer_keys, fixture().genesis->peer_keys);
  EXPECT_EQ(again.genesis->noise_table.entries, fixture().genesis->noise_table.entries);
  EXPECT_EQ(again.genesis->global_pk, fixture().genesis->global_pk);
  auto other = build_genesis<B>(small_params(), 78);
  EXPECT_NE(other.genesis->peer_keys, fixture().genesis->peer_keys);
}

TEST(Ledger, AppendValidBlockRewardsStake) {
  Ledger<B> l(fixture().genesis);
  auto b = make_block(l, 3, 1);
  auto cm = committees_for(l.genesis(), l.stake(), l.tip_hash(), 1);
  auto before = l.stake();
  ASSERT_TRUE(l.append(b)) << to_string(l.validate(b).reason);
  EXPECT_EQ(l.height(), 1u);
  EXPECT_EQ(l.tip().model.iteration, 1u);
  std::set<PeerId> rewarded;
  for (auto p : b.contributors()) rewarded.insert(p);
  for (auto p : cm.members()) rewarded.insert(p);
  for (const auto& [p, s] : l.stake()) EXPECT_EQ(s, before.at(p) + (rewarded.count(p) ? kStakeIncrement : 0));

  auto b2 = make_block(l, 4, 2);
  ASSERT_TRUE(l.append(b2));
  EXPECT_EQ(l.height(), 2u);
  EXPECT_EQ(l.tip().prev_hash, l.hash_at(1));
}

TEST(Ledger, ModelFollowsAggregate) {
  Ledger<B> l(fixture().genesis);
  auto b = make_block(l, 4, 1);
  auto expected = decode(b.aggregate);
  ASSERT_TRUE(l.append(b));
  for (std::size_t j = 0; j < expected.size(); ++j) EXPECT_EQ(l.tip().model.weights[j], expected[j]);
}

TEST(Ledger, RejectionReasons) {
  Ledger<B> l(fixture().genesis);
  auto good = make_block(l, 3, 1);
  ASSERT_TRUE(l.validate(good));

  auto b = good;
  b.height = 2;
  EXPECT_EQ(l.validate(b).reason, Rejection::BadHeight);

  b = good;
  b.prev_hash[0] ^= 1;
  EXPECT_EQ(l.validate(b).reason, Rejection::BadPrevHash);

  b = good;
  b.model.weights[0] += 1e-6;
  resign(l, b);
  EXPECT_EQ(l.validate(b).reason, Rejection::ModelMismatch);

  b = good;
  b.aggregate.coeffs[2] += F::one();
  b.model = ml::apply_aggregate(l.tip().model, decode(b.aggregate));
  resign(l, b);
  EXPECT_EQ(l.validate(b).reason, Rejection::AggregateMismatch);

  b = good;
  b.commitments[0].approvals.resize(1);
  resign(l, b);
  EXPECT_EQ(l.validate(b).reason, Rejection::MissingApprovals);

  b = good;
  b.aggregator_sigs.clear();
  EXPECT_EQ(l.validate(b).reason, Rejection::BadAggregatorSignature);

  b = good;
  b.aggregator_sigs[0].sig[5] ^= 1;
  EXPECT_EQ(l.validate(b).reason, Rejection::BadAggregatorSignature);

  b = good;
  std::swap(b.commitments[0], b.commitments[1]);
  resign(l, b);
  EXPECT_EQ(l.validate(b).reason, Rejection::UnorderedContributors);

  b = good;
  b.commitments.clear();
  resign(l, b);
  EXPECT_EQ(l.validate(b).reason, Rejection::EmptyBlock);

  b = good;
  b.model.weights.pop_back();
  resign(l, b);
  EXPECT_EQ(l.validate(b).reason, Rejection::BadShape);

  // signatures from a peer outside the aggregator committee do not count
  b = good;
  auto cm = committees_for(l.genesis(), l.stake(), l.tip_hash(), 1);
  PeerId outsider = b.commitments[0].peer;
  b.aggregator_sigs = {sign_block_hash(block_hash(b), fixture().secrets[outsider].key, outsider)};
  EXPECT_EQ(l.validate(b).reason, Rejection::BadAggregatorSignature);

  // a committee member listed as contributor
  b = good;
  PeerId v = cm.verifiers[0];
  b.commitments[0].peer = v;
  std::sort(b.commitments.begin(), b.commitments.end(), [](auto& x, auto& y) { return x.peer < y.peer; });
  resign(l, b);
  auto r = l.validate(b).reason;
  EXPECT_TRUE(r == Rejection::CommitteeContributor || r == Rejection::UnorderedContributors);

  EXPECT_EQ(l.height(), 0u);
}

TEST(Ledger, RoundMustAdvance) {
  Ledger<B> l(fixture().genesis);
  ASSERT_TRUE(l.append(make_block(l, 2, 3)));
  auto b = make_block(l, 2, 3);
  EXPECT_EQ(l.validate(b).reason, Rejection::BadRound);
  EXPECT_TRUE(l.validate(make_block(l, 2, 5)));
}

TEST(Ledger, TooManyUpdates) {
  auto p = small_params();
  p.updates_per_block = 2;
  auto gb = build_genesis<B>(p, 77);
  Ledger<B> l(gb.genesis);
  // same keys as the fixture, so make_block's signatures remain valid
  auto b = make_block(l, 3, 1);
  EXPECT_EQ(l.validate(b).reason, Rejection::TooManyUpdates);
}

TEST(Ledger, SerializationRoundTrip) {
  Ledger<B> l(fixture().genesis);
  auto b = make_block(l, 3, 1);
  auto bytes = serialize_block(b);
  EXPECT_EQ(deserialize_block<B>(bytes), b);
  for (std::size_t cut : {std::size_t(0), std::size_t(10), bytes.size() / 2, bytes.size() - 1}) {
    std::vector<uint8_t> part(bytes.begin(), bytes.begin() + std::ptrdiff_t(cut));
    EXPECT_THROW(deserialize_block<B>(part), ParseError) << cut;
  }
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(deserialize_block<B>(extra), ParseError);
}

TEST(Ledger, HashIgnoresAggregatorSignatures) {
  Ledger<B> l(fixture().genesis);
  auto b = make_block(l, 3, 1);
  auto h = block_hash(b);
  b.aggregator_sigs.push_back(b.aggregator_sigs[0]);
  EXPECT_EQ(block_hash(b), h);
  b.round += 1;
  EXPECT_NE(block_hash(b), h);
}

TEST(Ledger, CatchUpAdoptsValidChain) {
  Ledger<B> remote(fixture().genesis);
  for (uint64_t r = 1; r <= 4; ++r) ASSERT_TRUE(remote.append(make_block(remote, 3, r)));
  Ledger<B> local(fixture().genesis);
  ASSERT_TRUE(local.append(remote.chain()[1]));
  auto res = local.catch_up(remote.chain());
  EXPECT_TRUE(res.adopted);
  EXPECT_EQ(local.height(), 4u);
  EXPECT_EQ(local.tip_hash(), remote.tip_hash());
  EXPECT_EQ(local.stake(), remote.stake());
}

TEST(Ledger, CatchUpRejectsInvalidSuffix) {
  Ledger<B> remote(fixture().genesis);
  for (uint64_t r = 1; r <= 3; ++r) ASSERT_TRUE(remote.append(make_block(remote, 3, r)));
  auto chain = remote.chain();
  chain[2].model.weights[1] += 0.5;
  Ledger<B> local(fixture().genesis);
  auto res = local.catch_up(chain);
  EXPECT_FALSE(res.adopted);
  EXPECT_EQ(res.failed_height, 2u);
  EXPECT_EQ(local.height(), 0u);

  // diverging prefix
  Ledger<B> other(fixture().genesis);
  ASSERT_TRUE(other.append(make_block(other, 2, 1, 9)));
  auto res2 = other.catch_up(remote.chain());
  EXPECT_FALSE(res2.adopted);
  EXPECT_EQ(other.height(), 1u);
}

TEST(Ledger, ReplayIsDeterministic) {
  Ledger<B> a(fixture().genesis);
  for (uint64_t r = 1; r <= 5; ++r) ASSERT_TRUE(a.append(make_block(a, 1 + r % 4, r)));
  Ledger<B> b(fixture().genesis);
  for (std::size_t h = 1; h < a.chain().size(); ++h) ASSERT_TRUE(b.append(a.chain()[h]));
  EXPECT_EQ(a.tip_hash(), b.tip_hash());
  EXPECT_EQ(a.stake(), b.stake());
  EXPECT_EQ(a.tip().model, b.tip().model);
}

TEST(Ledger, SharedCacheAgreesWithDirectValidation) {
  auto cache = std::make_shared<ValidationCache>();
  Ledger<B> a(fixture().genesis, cache), b(fixture().genesis, cache);
  auto blk = make_block(a, 3, 1);
  auto bad = blk;
  bad.aggregator_sigs.clear();
  EXPECT_EQ(a.validate(bad).reason, Rejection::BadAggregatorSignature);
  EXPECT_EQ(b.validate(bad).reason, Rejection::BadAggregatorSignature);
  EXPECT_TRUE(a.append(blk));
  EXPECT_TRUE(b.append(blk));
  EXPECT_EQ(a.stake(), b.stake());
}

TEST(Ledger, ChainFileRoundTrip) {
  Ledger<B> l(fixture().genesis);
  for (uint64_t r = 1; r <= 3; ++r) ASSERT_TRUE(l.append(make_block(l, 3, r)));
  auto path = (std::filesystem::temp_directory_path() / "biscotti_chain_test.bin").string();
  write_chain_file<B>(path, l.chain());
  auto blocks = read_chain_file<B>(path);
  ASSERT_EQ(blocks.size(), 3u);
  Ledger<B> replay(fixture().genesis);
  for (const auto& b : blocks) ASSERT_TRUE(replay.append(b));
  EXPECT_EQ(replay.tip_hash(), l.tip_hash());

  // truncated file reports an offset
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  try {
    read_chain_file<B>(path);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_GT(e.offset(), 8u);
  }
  std::filesystem::remove(path);
}
