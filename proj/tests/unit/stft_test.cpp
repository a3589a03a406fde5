#include <gtest/gtest.h>

#include <cmath>
#include <complex>

#include "bespoke/error.hpp"
#include "bespoke/stft.hpp"
#include "support.hpp"

using namespace bespoke;
using testing_support::random_clip;
using testing_support::rel_l2;

TEST(Stft, RoundTripRandomSignals) {
  std::mt19937_64 rng(2024);
  const int rates[] = {16000, 22050, 44100};
  const StftParams params;
  for (int i = 0; i < 30; ++i) {
    const int rate = rates[rng() % 3];
    const std::size_t n = 1 + rng() % static_cast<std::size_t>(2 * rate);
    const auto clip = random_clip(rng, n, rate);
    const auto back = istft(stft(clip, params));
    ASSERT_EQ(back.size(), clip.size());
    EXPECT_LT(rel_l2(back.samples, clip.samples), 1e-6) << "length " << n;
  }
}

TEST(Stft, RoundTripOtherValidConfigs) {
  std::mt19937_64 rng(3);
  const auto clip = random_clip(rng, 7001);
  for (const StftParams& p : {StftParams{512, 128, 512, WindowKind::sqrt_hann}, StftParams{1024, 512, 2048, WindowKind::sqrt_hann},
                              StftParams{400, 100, 512, WindowKind::hann}, StftParams{256, 256, 256, WindowKind::rectangular}}) {
    EXPECT_LT(rel_l2(istft(stft(clip, p)).samples, clip.samples), 1e-6);
  }
}

TEST(Stft, ShortInputs) {
  for (std::size_t n : {1u, 2u, 255u, 256u, 1023u, 1024u, 1025u}) {
    AudioClip c = AudioClip::zeros(n, 16000);
    c.samples[0] = 1.0;
    c.samples[n - 1] = -0.5;
    const auto s = stft(c, {});
    EXPECT_EQ(static_cast<std::size_t>(s.frames()), frame_count(n, {}));
    EXPECT_LT(rel_l2(istft(s).samples, c.samples), 1e-6);
  }
}

TEST(Stft, ZeroSignalGivesZeroSpectrogramAndBack) {
  const auto s = stft(AudioClip::zeros(5000, 16000), {});
  EXPECT_EQ(s.bins.cols(), 513);
  EXPECT_EQ(s.bins.cwiseAbs().maxCoeff(), 0.0);
  const auto back = istft(s);
  EXPECT_EQ(back.size(), 5000u);
  for (double x : back.samples) EXPECT_EQ(x, 0.0);
}

TEST(Stft, ImpulseReconstruction) {
  AudioClip c = AudioClip::zeros(4000, 16000);
  c.samples[1234] = 1.0;
  const auto back = istft(stft(c, {}));
  for (std::size_t i = 0; i < c.size(); ++i) ASSERT_NEAR(back.samples[i], c.samples[i], 1e-6);
}

TEST(Stft, BinCenteredSinusoidConcentratesEnergy) {
  const StftParams p;
  const int rate = 16000;
  const int k = 64;  // bin index
  const double hz = static_cast<double>(k) * rate / p.fft_size;
  const auto tone = testing_support::sine(hz, 1.0, rate);
  const auto s = stft(tone, p);
  // Interior frames only: edge frames see the zero padding.
  for (Eigen::Index f = 4; f < s.frames() - 4; ++f) {
    const Eigen::ArrayXd e = s.bins.row(f).cwiseAbs2().transpose();
    const double near = e.segment(k - 1, 3).sum();
    EXPECT_GE(near / e.sum(), 0.99) << "frame " << f;
  }
}

TEST(Stft, RejectsBadParameters) {
  auto invalid = [](StftParams p) {
    try {
      p.validate();
    } catch (const Error& e) {
      return e.code() == Errc::invalid_argument;
    }
    return false;
  };
  EXPECT_TRUE(invalid({1024, 2048, 1024, WindowKind::sqrt_hann}));  // hop > window
  EXPECT_TRUE(invalid({1024, 256, 512, WindowKind::sqrt_hann}));    // fft < window
  EXPECT_TRUE(invalid({1024, 768, 1024, WindowKind::sqrt_hann}));   // not COLA
  EXPECT_TRUE(invalid({1024, 0, 1024, WindowKind::sqrt_hann}));
  EXPECT_FALSE(invalid({}));
}

TEST(Stft, IstftRejectsInconsistentSpectrogram) {
  auto s = stft(AudioClip::zeros(3000, 16000), {});
  s.bins.conservativeResize(s.frames(), 100);
  EXPECT_THROW(istft(s), Error);
}

TEST(ApplyMask, Examples) {
  std::mt19937_64 rng(8);
  const auto s = stft(random_clip(rng, 6000), {});
  const auto ones = RealMatrix::Ones(s.frames(), s.bins.cols());
  EXPECT_EQ((apply_mask(s, ones).bins - s.bins).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(apply_mask(s, RealMatrix::Zero(s.frames(), s.bins.cols())).bins.cwiseAbs().maxCoeff(), 0.0);

  const auto half = apply_mask(s, RealMatrix::Constant(s.frames(), s.bins.cols(), 0.5));
  for (Eigen::Index f = 0; f < s.frames(); ++f)
    for (Eigen::Index b = 0; b < s.bins.cols(); ++b) {
      const auto x = s.bins(f, b), y = half.bins(f, b);
      ASSERT_NEAR(std::abs(y), 0.5 * std::abs(x), 1e-15);
      if (std::abs(x) > 1e-9) ASSERT_NEAR(std::arg(y), std::arg(x), 1e-12);
    }
}

TEST(ApplyMask, ComposesMultiplicatively) {
  std::mt19937_64 rng(10);
  const auto s = stft(random_clip(rng, 5000), {});
  RealMatrix a(s.frames(), s.bins.cols()), b(s.frames(), s.bins.cols());
  std::uniform_real_distribution<double> u(0, 1);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data()[i] = u(rng);
    b.data()[i] = u(rng);
  }
  const auto two_step = apply_mask(apply_mask(s, a), b);
  const auto one_step = apply_mask(s, a.cwiseProduct(b));
  EXPECT_LE((two_step.bins - one_step.bins).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ApplyMask, RejectsShapeAndRange) {
  const auto s = stft(AudioClip::zeros(3000, 16000), {});
  auto code = [&](const RealMatrix& m) {
    try {
      apply_mask(s, m);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::runtime;
  };
  EXPECT_EQ(code(RealMatrix::Ones(s.frames() + 1, s.bins.cols())), Errc::invalid_argument);
  RealMatrix m = RealMatrix::Ones(s.frames(), s.bins.cols());
  m(0, 0) = 1.5;
  EXPECT_EQ(code(m), Errc::invalid_argument);
  m(0, 0) = -0.1;
  EXPECT_EQ(code(m), Errc::invalid_argument);
}
