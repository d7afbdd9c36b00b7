#include <gtest/gtest.h>

#include "biscotti/experiment.hpp"

using namespace biscotti;
using B = crypto::DebugBackend;
using F = B::Scalar;

namespace {

GenesisParams params() {
  GenesisParams p;
  p.shape = {ml::ModelKind::LogReg, 4, 2};
  p.T = 6;
  p.peers = 12;
  p.sample_size = 6;
  p.krum_f = 1;
  p.updates_per_block = 3;
  return p;
}

const GenesisBundle<B>& fixture() {
  static const auto g = build_genesis<B>(params(), 5);
  return g;
}

struct Masked {
  PeerId submitter = 0;
  Submission<B> sub;
};

// An honest masked submission for the first non-committee peer at round 1.
Masked honest_submission() {
  const auto& gb = fixture();
  const auto& g = *gb.genesis;
  Ledger<B> l(gb.genesis);
  auto cm = committees_for(g, l.stake(), l.tip_hash(), 1);
  PeerId p = 0;
  while (cm.contains(p)) ++p;
  Rng rng(3);
  std::vector<double> v(g.shape.dim());
  for (auto& x : v) x = rng.gaussian(0, 0.1);
  auto poly = encode<F>(v, F::random(rng), g.quant);
  const auto& key = gb.secrets[p].key;
  auto draw = keyed_draw(key, p, StakeRing(l.stake()), noiser_seed(key.public_key(), l.tip_hash(), 1),
                         g.committees.noisers);
  std::vector<QuantizedPoly<F>> noises;
  Masked m{p, {commit(*g.pk, poly), {}, draw, {}}};
  for (PeerId n : draw.committee) {
    const auto& s = gb.secrets[n];
    auto z = generate_noise<F>(g.noise, g.train, g.shape.dim(), s.noise_seed, 0, n, s.noise_kind, g.quant);
    noises.push_back(z.quantized);
    m.sub.noise_commitments.push_back(g.noise_table.at(n, 0));
  }
  m.sub.masked = mask_update(poly, std::span<const QuantizedPoly<F>>(noises), g.quant);
  return m;
}

bool check(const Masked& m, uint64_t round = 1) {
  const auto& gb = fixture();
  Ledger<B> l(gb.genesis);
  return verify_masked_submission(*gb.genesis, l.stake(), l.tip_hash(), round, 0, m.submitter, m.sub);
}

ExperimentSpec small_spec() {
  ExperimentSpec s;
  s.name = "small";
  s.nodes = 12;
  s.iterations = 5;
  s.sample_fraction = 0.5;
  s.data.examples_per_peer = 30;
  s.data.validation_examples = 300;
  s.data.params.dim = 6;
  s.data.params.separation = 3;
  return s;
}

}  // namespace

TEST(Envelope, RoundTripAndTamper) {
  const auto& gb = fixture();
  auto bytes = seal(MsgType::Approval, 3, 4, 2, {1, 2, 3}, gb.secrets[2].key);
  auto e = open_envelope(bytes);
  EXPECT_EQ(e.type, MsgType::Approval);
  EXPECT_EQ(e.height, 3u);
  EXPECT_EQ(e.round, 4u);
  EXPECT_EQ(e.sender, 2u);
  EXPECT_EQ(e.payload, (std::vector<uint8_t>{1, 2, 3}));
  EXPECT_TRUE(verify_envelope(e, gb.genesis->peer_keys));
  e.sender = 3;
  EXPECT_FALSE(verify_envelope(e, gb.genesis->peer_keys));
  bytes.pop_back();
  EXPECT_THROW(open_envelope(bytes), ParseError);
}

TEST(MaskedSubmission, HonestAccepted) {
  auto m = honest_submission();
  EXPECT_TRUE(check(m));
  auto bytes = encode_submission(m.sub);
  auto back = decode_submission<B>(bytes);
  EXPECT_TRUE(back.masked == m.sub.masked);
  EXPECT_EQ(back.noisers.committee, m.sub.noisers.committee);
}

TEST(MaskedSubmission, NonGenesisNoiseRejected) {
  // noise chosen by the submitter to cancel its update is not the committed
  // genesis noise, so the equality cannot hold
  auto m = honest_submission();
  const auto& g = *fixture().genesis;
  Rng rng(8);
  std::vector<double> fake(g.shape.dim(), 0.25);
  auto zeta = encode<F>(fake, F::random(rng), g.quant);
  m.sub.noise_commitments[0] = commit(*g.pk, zeta);
  EXPECT_FALSE(check(m));
}

TEST(MaskedSubmission, AlteredMaskRejected) {
  auto m = honest_submission();
  m.sub.masked.coeffs[1] += F::one();
  EXPECT_FALSE(check(m));
}

TEST(MaskedSubmission, WrongNoiserSetRejected) {
  auto m = honest_submission();
  const auto& gb = fixture();
  // swap in another peer whose genesis noise entry is genuine
  PeerId other = 0;
  while (std::count(m.sub.noisers.committee.begin(), m.sub.noisers.committee.end(), other) || other == m.submitter)
    ++other;
  m.sub.noisers.committee[0] = other;
  m.sub.noise_commitments[0] = gb.genesis->noise_table.at(other, 0);
  EXPECT_FALSE(check(m));
}

TEST(MaskedSubmission, StaleRoundRejected) {
  auto m = honest_submission();
  EXPECT_FALSE(check(m, 2));
}

TEST(Simulation, HappyPathProducesTBlocks) {
  auto s = small_spec();
  auto r = run_experiment(s);
  EXPECT_EQ(r.blocks, s.iterations);
  EXPECT_EQ(r.forks, 0u);
  EXPECT_EQ(r.void_rounds, 0u);
  EXPECT_TRUE(r.agreement);
  EXPECT_TRUE(r.replay_ok);
  ASSERT_EQ(r.metrics.rows.size(), s.iterations);
  for (std::size_t i = 0; i < r.metrics.rows.size(); ++i) EXPECT_EQ(r.metrics.rows[i].iteration, i + 1);
  EXPECT_LT(r.metrics.rows.back().validation_error, r.metrics.rows.front().validation_error + 1e-12);
}

TEST(Simulation, SameSeedSameMetrics) {
  auto s = small_spec();
  auto a = run_experiment(s);
  auto b = run_experiment(s);
  EXPECT_EQ(a.metrics.to_csv(), b.metrics.to_csv());
  EXPECT_EQ(a.chain, b.chain);
  s.seed = 2;
  auto c = run_experiment(s);
  EXPECT_NE(a.metrics.to_csv(), c.metrics.to_csv());
}

TEST(Simulation, ChurnKeepsSingleChain) {
  auto s = small_spec();
  s.iterations = 8;
  s.spare_nodes = 4;
  s.sim.churn_per_minute = 4;
  auto r = run_experiment(s);
  EXPECT_GT(r.churn_events, 0u);
  EXPECT_EQ(r.forks, 0u);
  EXPECT_TRUE(r.agreement);
  EXPECT_TRUE(r.replay_ok);
  EXPECT_GE(r.blocks, 6u);
}

TEST(Simulation, LedgerHeightNeverDecreases) {
  auto s = small_spec();
  auto r = run_experiment(s);
  for (std::size_t i = 1; i < r.metrics.rows.size(); ++i) {
    EXPECT_GE(r.metrics.rows[i].blocks, r.metrics.rows[i - 1].blocks);
    EXPECT_GE(r.metrics.rows[i].sim_time, r.metrics.rows[i - 1].sim_time);
  }
}

TEST(Simulation, CsvHasHeader) {
  MetricsLog log;
  log.rows.push_back({});
  auto csv = log.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "iteration,sim_time,validation_error,attack_rate,honest_stake_fraction,blocks,forks,dropped_updates");
}

TEST(SimConfig, RejectsBadValues) {
  SimConfig c;
  c.online = 5;
  EXPECT_NO_THROW(c.validate(5));
  EXPECT_THROW(c.validate(4), InvalidArgument);
  c.churn_per_minute = -1;
  EXPECT_THROW(c.validate(5), InvalidArgument);
  c.churn_per_minute = 0;
  c.protocol.timeouts.deal = 0;
  EXPECT_THROW(c.validate(5), InvalidArgument);
}
