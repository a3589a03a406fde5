#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "bespoke/audio.hpp"
#include "bespoke/error.hpp"
#include "bespoke/resample.hpp"
#include "bespoke/stft.hpp"
#include "bespoke/wav.hpp"
#include "support.hpp"

using namespace bespoke;
using testing_support::random_clip;
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

}  // namespace

TEST(Decibels, KnownValues) {
  EXPECT_DOUBLE_EQ(db_to_gain(0.0), 1.0);
  // 10^(-12/20) and 10^(6/20), evaluated independently with exp/log.
  EXPECT_NEAR(db_to_gain(-12.0), std::exp(-12.0 / 20.0 * std::log(10.0)), 1e-12);
  EXPECT_NEAR(db_to_gain(-12.0), 0.25119, 1e-5);
  EXPECT_NEAR(db_to_gain(6.0), 1.99526, 1e-5);
}

TEST(Decibels, NonFiniteIsInvalid) {
  EXPECT_EQ(code_of([] { db_to_gain(std::numeric_limits<double>::quiet_NaN()); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([] { db_to_gain(std::numeric_limits<double>::infinity()); }), Errc::invalid_argument);
}

TEST(Decibels, AdditiveInDbMultiplicativeInGain) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-40, 20);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng), b = u(rng);
    EXPECT_NEAR(db_to_gain(a + b), db_to_gain(a) * db_to_gain(b), 1e-12 * db_to_gain(a + b));
  }
}

TEST(Decibels, MonotoneAndPositive) {
  double prev = 0.0;
  for (double db = -120; db <= 40; db += 0.5) {
    const double g = db_to_gain(db);
    EXPECT_GT(g, prev);
    prev = g;
  }
}

TEST(PeakNormalize, Examples) {
  AudioClip half({0.5, -0.25, 0.1}, 16000);
  auto n = peak_normalize(half);
  EXPECT_DOUBLE_EQ(n.scale, 2.0);
  EXPECT_DOUBLE_EQ(peak(n.clip), 1.0);

  AudioClip unit({1.0, -0.3}, 16000);
  auto u = peak_normalize(unit);
  EXPECT_DOUBLE_EQ(u.scale, 1.0);
  EXPECT_EQ(u.clip.samples, unit.samples);

  EXPECT_EQ(code_of([] { peak_normalize(AudioClip::zeros(100, 16000)); }), Errc::degenerate_silence);
}

TEST(PeakNormalize, Idempotent) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 200; ++i) {
    const auto clip = random_clip(rng, 1 + rng() % 2000, 16000, 0.01 + (rng() % 100) / 10.0);
    const auto once = peak_normalize(clip).clip;
    const auto twice = peak_normalize(once).clip;
    for (std::size_t k = 0; k < once.size(); ++k) ASSERT_NEAR(once.samples[k], twice.samples[k], 1e-12);
    EXPECT_NEAR(peak(once), 1.0, 1e-12);
  }
}

TEST(AudioClipOps, CropPadsWithZeros) {
  AudioClip c({1, 2, 3, 4}, 8000);
  EXPECT_EQ(crop(c, 1, 2).samples, (std::vector<double>{2, 3}));
  EXPECT_EQ(crop(c, 3, 3).samples, (std::vector<double>{4, 0, 0}));
  EXPECT_EQ(crop(c, 10, 2).samples, (std::vector<double>{0, 0}));
}

TEST(AudioClipOps, AddZeroExtends) {
  AudioClip a({1, 1, 1}, 8000), b({2}, 8000);
  EXPECT_EQ(add(a, b).samples, (std::vector<double>{3, 1, 1}));
  EXPECT_EQ(add(b, a).samples, (std::vector<double>{3, 1, 1}));
}

TEST(AudioClipOps, ValidateRejectsNonFinite) {
  AudioClip c({0.0, std::numeric_limits<double>::quiet_NaN()}, 16000);
  EXPECT_EQ(code_of([&] { validate(c); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([] { validate(AudioClip({0.0}, 0)); }), Errc::invalid_argument);
}

TEST(Wav, Float32RoundTripIsBitIdentical) {
  std::mt19937_64 rng(1);
  auto clip = random_clip(rng, 4097, 22050, 1.0);
  for (double& x : clip.samples) x = static_cast<float>(x);  // representable values
  const auto back = decode_wav(encode_wav(clip, WavEncoding::float32));
  EXPECT_EQ(back.sample_rate, 22050);
  EXPECT_EQ(back.samples, clip.samples);
}

TEST(Wav, IntegerRoundTripWithinQuantizationStep) {
  std::mt19937_64 rng(2);
  const auto clip = random_clip(rng, 5000, 44100, 1.0);
  const auto b16 = decode_wav(encode_wav(clip, WavEncoding::pcm16));
  const auto b24 = decode_wav(encode_wav(clip, WavEncoding::pcm24));
  for (std::size_t i = 0; i < clip.size(); ++i) {
    ASSERT_LE(std::abs(b16.samples[i] - clip.samples[i]), 1.0 / 32768);
    ASSERT_LE(std::abs(b24.samples[i] - clip.samples[i]), 1.0 / 8388608);
  }
}

TEST(Wav, IntegerWriteRejectsClipping) {
  AudioClip hot({0.5, 1.2}, 16000);
  EXPECT_EQ(code_of([&] { encode_wav(hot, WavEncoding::pcm16); }), Errc::out_of_range);
  EXPECT_EQ(code_of([&] { encode_wav(hot, WavEncoding::pcm24); }), Errc::out_of_range);
  EXPECT_NO_THROW(encode_wav(hot, WavEncoding::float32));
}

TEST(Wav, MalformedInputIsUnsupported) {
  std::vector<std::uint8_t> junk{'R', 'I', 'F', 'F', 4, 0, 0, 0, 'W', 'A', 'V', 'X'};
  EXPECT_EQ(code_of([&] { decode_wav(junk); }), Errc::unsupported_format);
  EXPECT_EQ(code_of([] { decode_wav(std::vector<std::uint8_t>{}); }), Errc::unsupported_format);
  // Valid header but an 8-bit codec.
  auto bytes = encode_wav(AudioClip({0.1, 0.2}, 8000), WavEncoding::pcm16);
  bytes[34] = 8;  // bits per sample
  EXPECT_EQ(code_of([&] { decode_wav(bytes); }), Errc::unsupported_format);
}

TEST(Wav, StereoIsAveragedToMono) {
  // Hand-built 16-bit stereo file: L = 0.5, R = -0.25 on every frame.
  std::vector<std::uint8_t> b;
  auto u32 = [&](std::uint32_t v) { for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xFF); };
  auto u16 = [&](std::uint16_t v) { b.push_back(v & 0xFF); b.push_back(v >> 8); };
  const int frames = 10;
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  u32(36 + frames * 4);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  u32(16); u16(1); u16(2); u32(8000); u32(8000 * 4); u16(4); u16(16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  u32(frames * 4);
  for (int i = 0; i < frames; ++i) {
    u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(16384)));
    u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(-8192)));
  }
  const auto clip = decode_wav(b);
  ASSERT_EQ(clip.size(), static_cast<std::size_t>(frames));
  EXPECT_EQ(clip.sample_rate, 8000);
  const double expected = 0.5 * (16384.0 / 32767 - 8192.0 / 32767);
  for (double x : clip.samples) EXPECT_NEAR(x, expected, 1e-12);
}

TEST(Wav, FileRoundTrip) {
  testing_support::TempDir dir;
  const auto clip = sine(440, 0.1, 16000, 0.5);
  write_wav(dir / "a.wav", clip, WavEncoding::float32);
  const auto back = read_wav(dir / "a.wav");
  for (std::size_t i = 0; i < clip.size(); ++i) ASSERT_NEAR(back.samples[i], clip.samples[i], 1e-7);
  EXPECT_EQ(code_of([&] { read_wav(dir / "missing.wav"); }), Errc::io);
}

namespace {

// Frequency of the strongest DFT bin with parabolic refinement.
double dominant_hz(const AudioClip& clip) {
  StftParams p{4096, 1024, 4096, WindowKind::hann};
  const auto spec = stft(clip, p);
  const RealMatrix mag = spec.magnitude();
  const Eigen::VectorXd avg = mag.colwise().sum().transpose();
  Eigen::Index k = 0;
  avg.maxCoeff(&k);
  double delta = 0.0;
  if (k > 0 && k + 1 < avg.size()) {
    const double a = avg(k - 1), b = avg(k), c = avg(k + 1);
    delta = 0.5 * (a - c) / (a - 2 * b + c);
  }
  return (static_cast<double>(k) + delta) * clip.sample_rate / p.fft_size;
}

}  // namespace

TEST(Resample, PreservesToneFrequencyAndLevel) {
  for (auto [from, to] : {std::pair{44100, 16000}, {22050, 16000}, {16000, 44100}, {48000, 22050}}) {
    const auto tone = sine(1000.0, 1.0, from, 0.5);
    const auto out = resample(tone, to);
    EXPECT_EQ(out.sample_rate, to);
    EXPECT_NEAR(static_cast<double>(out.size()), static_cast<double>(to), 1.0);
    EXPECT_NEAR(dominant_hz(out), 1000.0, 2.0) << from << "->" << to;
    // Passband gain ~0 dB away from the edges.
    const auto mid = crop(out, out.size() / 4, out.size() / 2);
    EXPECT_NEAR(peak(mid), 0.5, 0.01);
  }
}

TEST(Resample, RemovesContentAboveTargetNyquist) {
  const auto tone = sine(12000.0, 1.0, 44100, 0.5);  // above 8 kHz
  const auto out = resample(tone, 16000);
  const auto mid = crop(out, out.size() / 4, out.size() / 2);
  EXPECT_LT(peak(mid), 0.5 * db_to_gain(-60));
}

TEST(Resample, SameRateIsIdentity) {
  std::mt19937_64 rng(4);
  const auto clip = random_clip(rng, 1000);
  EXPECT_EQ(resample(clip, 16000).samples, clip.samples);
}

TEST(Wav, LoadAudioResamplesToProjectRate) {
  testing_support::TempDir dir;
  write_wav(dir / "x.wav", sine(440, 0.5, 44100, 0.5), WavEncoding::pcm24);
  const auto clip = load_audio(dir / "x.wav", 16000);
  EXPECT_EQ(clip.sample_rate, 16000);
  EXPECT_NEAR(static_cast<double>(clip.size()), 8000.0, 1.0);
}
