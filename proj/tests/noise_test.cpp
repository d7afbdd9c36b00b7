#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "biscotti/dp_noise.hpp"

using namespace biscotti;
using crypto::DebugBackend;
using F = DebugBackend::Scalar;

TEST(Noise, SigmaFormula) {
  // sqrt(2 ln(1.25e5)) / 2, evaluated independently
  EXPECT_NEAR(noise_sigma(2.0, 1e-5), 2.4224026313026945, 1e-12);
  EXPECT_EQ(noise_sigma(std::numeric_limits<double>::infinity(), 1e-5), 0.0);
  EXPECT_THROW(noise_sigma(0.0, 1e-5), InvalidArgument);
  EXPECT_THROW(noise_sigma(1.0, 1.0), InvalidArgument);
  EXPECT_THROW(noise_sigma(1.0, 0.0), InvalidArgument);
}

TEST(Noise, DeterministicAndScaled) {
  NoiseConfig nc;
  ml::TrainConfig tc;
  tc.eta0 = 1.0;
  tc.batch_size = 1;
  auto a = generate_noise<F>(nc, tc, 25, 77, 3), b = generate_noise<F>(nc, tc, 25, 77, 3);
  EXPECT_EQ(a.zeta, b.zeta);
  EXPECT_EQ(a.quantized, b.quantized);
  EXPECT_NE(generate_noise<F>(nc, tc, 25, 77, 4).zeta, a.zeta);
  EXPECT_NE(generate_noise<F>(nc, tc, 25, 78, 3).zeta, a.zeta);
  auto none = generate_noise<F>({std::numeric_limits<double>::infinity(), 1e-5}, tc, 25, 77, 3);
  for (double z : none.zeta) EXPECT_EQ(z, 0.0);
  auto zero = generate_noise<F>(nc, tc, 25, 77, 3, 0, NoiseKind::Zero);
  for (double z : zero.zeta) EXPECT_EQ(z, 0.0);
}

TEST(Noise, MomentsMatchSigma) {
  NoiseConfig nc;
  ml::TrainConfig tc;
  tc.eta0 = 1.0;
  tc.batch_size = 1;
  double sigma = noise_sigma(nc.epsilon, nc.delta);
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (uint64_t t = 0; t < 1000; ++t) {
    auto v = generate_noise<F>(nc, tc, 100, 5, t);
    for (double z : v.zeta) {
      sum += z;
      sq += z * z;
      ++n;
    }
  }
  ASSERT_EQ(n, 100000u);
  double mean = sum / double(n);
  EXPECT_LE(std::fabs(mean), 4 * sigma / std::sqrt(double(n)));
  EXPECT_NEAR(std::sqrt(sq / double(n)), sigma, 0.02 * sigma);
}

TEST(Noise, BatchAveragingScale) {
  // eta/b * sum of b draws has sd eta * sigma / sqrt(b)
  NoiseConfig nc;
  ml::TrainConfig tc;
  tc.eta0 = 0.5;
  tc.batch_size = 16;
  double sq = 0;
  std::size_t n = 0;
  for (uint64_t t = 0; t < 400; ++t)
    for (double z : generate_noise<F>(nc, tc, 50, 9, t).zeta) {
      sq += z * z;
      ++n;
    }
  double expect = 0.5 * noise_sigma(2.0, 1e-5) / 4.0;
  EXPECT_NEAR(std::sqrt(sq / double(n)), expect, 0.03 * expect);
}

TEST(NoiseTable, DimensionsAndRegeneration) {
  auto pk = trusted_setup<DebugBackend>(10, 1);
  std::vector<uint64_t> seeds{11, 12, 13};
  std::vector<NoiseKind> kinds{NoiseKind::Gaussian, NoiseKind::Zero, NoiseKind::Gaussian};
  NoiseConfig nc;
  ml::TrainConfig tc;
  auto table = build_noise_table(pk, seeds, kinds, 4, nc, tc);
  EXPECT_EQ(table.entries.size(), 12u);
  for (PeerId p = 0; p < 3; ++p)
    for (uint64_t t = 0; t < 4; ++t) {
      auto n = generate_noise<F>(nc, tc, 10, seeds[p], t, p, kinds[p]);
      EXPECT_EQ(commit(pk, n.quantized), table.at(p, t));
    }
  EXPECT_THROW(table.at(3, 0), InvalidArgument);
  EXPECT_THROW(table.at(0, 4), InvalidArgument);
}

TEST(Masking, HomomorphicEquality) {
  auto pk = trusted_setup<DebugBackend>(25, 2);
  auto bpk = trusted_setup<crypto::Bn254Backend>(25, 2);
  Rng rng(3);
  NoiseConfig nc;
  ml::TrainConfig tc;
  std::vector<double> v(25);
  for (auto& x : v) x = rng.gaussian(0, 0.2);
  auto upd = encode<F>(v, F::random(rng));
  std::vector<QuantizedPoly<F>> noises;
  for (uint64_t k = 0; k < 3; ++k) noises.push_back(generate_noise<F>(nc, tc, 25, 100 + k, 0).quantized);
  auto masked = mask_update<F>(upd, noises);
  std::vector<Commitment<DebugBackend>> parts{commit(pk, upd)};
  for (auto& n : noises) parts.push_back(commit(pk, n));
  EXPECT_EQ(commit(pk, masked), combine<DebugBackend>(parts));
  auto dm = decode(masked), du = decode(upd);
  for (std::size_t j = 0; j < 25; ++j) {
    double expect = du[j];
    for (auto& n : noises) expect += decode(n)[j];
    EXPECT_DOUBLE_EQ(dm[j], expect);
  }
  EXPECT_EQ(mask_update<F>(upd, {}), upd);

  using G = crypto::Bn254Backend::Scalar;
  auto bu = encode<G>(v, G::random(rng));
  auto bn = generate_noise<G>(nc, tc, 25, 5, 0).quantized;
  std::vector<QuantizedPoly<G>> bns{bn};
  std::vector<Commitment<crypto::Bn254Backend>> bparts{commit(bpk, bu), commit(bpk, bn)};
  EXPECT_EQ(commit(bpk, mask_update<G>(bu, bns)), combine<crypto::Bn254Backend>(bparts));
}
