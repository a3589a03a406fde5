#include <gtest/gtest.h>

#include <cmath>

#include "bespoke/error.hpp"
#include "bespoke/separate.hpp"
#include "support.hpp"

using namespace bespoke;
using testing_support::random_clip;
using testing_support::rel_l2;
using testing_support::sine;

namespace {

Errc code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no bespoke::Error thrown";
  return Errc::runtime;
}

MaskNetConfig small_config() {
  MaskNetConfig c;
  c.input_bins = 513;
  c.hidden_units = 8;
  return c;
}

MaskNet with_output_bias(float bias) {
  MaskNet net(small_config());
  const auto& l = net.layout();
  for (int b = 0; b < 513; ++b) net.parameters()[static_cast<Eigen::Index>(l.output_bias) + b] = bias;
  return net;
}

std::vector<double> sum(const AudioClip& a, const AudioClip& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.samples[i] + b.samples[i];
  return out;
}

}  // namespace

TEST(Separate, SaturatedMaskPassesMixtureThrough) {
  std::mt19937_64 rng(1);
  const auto mix = random_clip(rng, 20000);
  const auto r = separate(mix, with_output_bias(40.0f), {});
  EXPECT_LT(rel_l2(r.estimate.samples, mix.samples), 1e-3);
  double res = 0, total = 0;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    res += r.residual.samples[i] * r.residual.samples[i];
    total += mix.samples[i] * mix.samples[i];
  }
  EXPECT_LT(std::sqrt(res / total), 1e-3);
  EXPECT_NEAR(r.mean_mask, 1.0, 1e-6);
}

TEST(Separate, ZeroWeightNetHalvesMixture) {
  std::mt19937_64 rng(2);
  const auto mix = random_clip(rng, 16000);
  const auto r = separate(mix, MaskNet(small_config()), {});
  ASSERT_EQ(r.estimate.size(), mix.size());
  for (std::size_t i = 0; i < mix.size(); ++i) ASSERT_NEAR(r.estimate.samples[i], 0.5 * mix.samples[i], 1e-6);
  EXPECT_NEAR(r.mean_mask, 0.5, 1e-12);
  EXPECT_NEAR(r.masked_energy_fraction, 0.25, 1e-6);
}

TEST(Separate, EstimatePlusResidualIsMixture) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const auto mix = random_clip(rng, 1024 + rng() % 30000);
    const auto net = MaskNet::initialized(small_config(), 100 + static_cast<std::uint64_t>(trial));
    const auto r = separate(mix, net, {}, {0.5, 0.25});
    ASSERT_EQ(r.residual.size(), mix.size());
    EXPECT_LT(rel_l2(sum(r.estimate, r.residual), mix.samples), 1e-6);
  }
}

TEST(Separate, ShortSignalMatchesWholeSignalInference) {
  std::mt19937_64 rng(4);
  const auto mix = add(sine(440, 3.0, 16000, 0.3), random_clip(rng, 48000, 16000, 0.05));
  const auto net = MaskNet::initialized(small_config(), 5);
  const auto spec = stft(mix, {});
  const RealMatrix whole_mask = forward(net, featurize(spec)).cast<double>();
  const auto whole = separate_with_mask(mix, whole_mask, {});
  const auto chunked = separate(mix, net, {});
  EXPECT_LT(rel_l2(chunked.estimate.samples, whole.estimate.samples), 1e-3);
}

TEST(Separate, BlendedChunksStayValidMasks) {
  std::mt19937_64 rng(14);
  const auto mix = random_clip(rng, 80000);
  const auto net = MaskNet::initialized(small_config(), 6);
  const auto r = separate(mix, net, {}, {1.0, 0.5});
  EXPECT_GE(r.mask.minCoeff(), 0.0);
  EXPECT_LE(r.mask.maxCoeff(), 1.0);
  EXPECT_LT(rel_l2(sum(r.estimate, r.residual), mix.samples), 1e-6);
  // Chunk edges lack recurrent context, so only a loose bound holds here.
  const auto whole = separate(mix, net, {}, {10.0, 5.0});
  EXPECT_LT(rel_l2(r.estimate.samples, whole.estimate.samples), 0.1);
}

TEST(Separate, TooShortAndTrainingModeRejected) {
  EXPECT_EQ(code_of([] { separate(AudioClip::zeros(500, 16000), MaskNet(small_config()), {}); }), Errc::too_short);
  MaskNet net(small_config());
  net.set_training(true);
  EXPECT_EQ(code_of([&] { separate(AudioClip::zeros(5000, 16000), net, {}); }), Errc::invalid_argument);
}

TEST(Separate, OracleMaskRecoversSeparableSource) {
  const auto target = sine(440, 1.0, 16000, 0.4);
  const auto other = sine(3000, 1.0, 16000, 0.4);
  const auto mix = add(target, other);
  const auto ms = stft(mix, {}), ts = stft(target, {});
  const auto r = separate_with_mask(mix, oracle_mask(ms, ts), {});
  EXPECT_GT(si_sdr(r.estimate, target), 30.0);
  EXPECT_LT(rel_l2(sum(r.estimate, r.residual), mix.samples), 1e-6);
}

TEST(SiSdr, IdentityHitsCap) {
  const auto s = sine(300, 0.5);
  EXPECT_EQ(si_sdr(s, s), kSiSdrCap);
  EXPECT_EQ(si_sdr(scaled(s, 2.0), s), kSiSdrCap);
}

TEST(SiSdr, ScaleInvariant) {
  std::mt19937_64 rng(6);
  const auto s = random_clip(rng, 4000), e = add(s, random_clip(rng, 4000, 16000, 0.3));
  const double base = si_sdr(e, s);
  for (double c : {0.1, 1.0, 10.0}) EXPECT_NEAR(si_sdr(scaled(e, c), s), base, 1e-9);
}

TEST(SiSdr, OrthogonalNoiseAtTwentyDb) {
  // Noise orthogonal to s by Gram-Schmidt, scaled to 1% of the energy of s.
  const auto s = sine(440, 1.0, 16000, 1.0);
  std::mt19937_64 rng(7);
  auto n = random_clip(rng, s.size());
  double ns = 0, ss = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    ns += n.samples[i] * s.samples[i];
    ss += s.samples[i] * s.samples[i];
  }
  for (std::size_t i = 0; i < s.size(); ++i) n.samples[i] -= ns / ss * s.samples[i];
  double nn = 0;
  for (double x : n.samples) nn += x * x;
  n = scaled(n, std::sqrt(0.01 * ss / nn));
  EXPECT_NEAR(si_sdr(add(s, n), s), 20.0, 0.1);
}

TEST(SiSdr, Errors) {
  EXPECT_EQ(code_of([] { si_sdr(sine(100, 0.1), AudioClip::zeros(1600, 16000)); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([] { si_sdr(sine(100, 0.1), sine(100, 0.2)); }), Errc::invalid_argument);
}
