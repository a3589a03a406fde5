#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>

#include "bespoke/error.hpp"
#include "bespoke/model.hpp"
#include "bespoke/wav.hpp"
#include "support.hpp"

using namespace bespoke;
using testing_support::random_clip;

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

Spectrogram random_spec(std::mt19937_64& rng, int frames, int bins, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Spectrogram s;
  s.bins.resize(frames, bins);
  for (Eigen::Index i = 0; i < s.bins.size(); ++i) s.bins.data()[i] = {n(rng), n(rng)};
  return s;
}

const StftParams kSmallStft{64, 16, 64, WindowKind::sqrt_hann};  // 33 bins

MaskNetConfig tiny_config(int bins = 33, int hidden = 8) {
  MaskNetConfig c;
  c.input_bins = bins;
  c.hidden_units = hidden;
  return c;
}

// Repeats one example forever.
class FixedSource : public ExampleSource {
 public:
  explicit FixedSource(TrainingExample ex, std::size_t n = 1 << 20) : ex_(std::move(ex)), n_(n) {}
  std::size_t size() const override { return n_; }
  TrainingExample at(std::size_t) const override { return ex_; }
  std::string describe(std::size_t i) const override { return "fixed " + std::to_string(i); }

 private:
  TrainingExample ex_;
  std::size_t n_;
};

TrainingExample small_example(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TrainingExample ex;
  const auto tone = testing_support::sine(1000, 0.05, 16000, 0.5);
  const auto noise = random_clip(rng, tone.size(), 16000, 0.2);
  ex.mix = add(tone, noise);
  ex.reference = tone;
  return ex;
}

}  // namespace

TEST(Featurize, Log1pOfMagnitude) {
  Spectrogram s;
  s.bins.resize(1, 4);
  s.bins << std::complex<double>(0, 0), std::complex<double>(std::numbers::e - 1, 0),
      std::complex<double>(0, -(std::numbers::e - 1)), std::complex<double>(3, 4);
  const auto f = featurize(s);
  EXPECT_EQ(f(0, 0), 0.0f);
  EXPECT_NEAR(f(0, 1), 1.0f, 1e-6);
  EXPECT_NEAR(f(0, 2), 1.0f, 1e-6);
  EXPECT_NEAR(f(0, 3), std::log(6.0f), 1e-6);
}

TEST(Featurize, Monotone) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 100);
  for (int i = 0; i < 1000; ++i) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    Spectrogram s;
    s.bins.resize(1, 2);
    s.bins << std::complex<double>(a, 0), std::complex<double>(0, b);
    const auto f = featurize(s);
    EXPECT_LE(f(0, 0), f(0, 1));
  }
}

TEST(Forward, ZeroWeightsGiveHalf) {
  const MaskNet net(tiny_config());
  std::mt19937_64 rng(2);
  RowMatrix<float> x = RowMatrix<float>::Random(10, 33);
  const auto m = forward(net, x);
  EXPECT_EQ(m.rows(), 10);
  EXPECT_EQ(m.cols(), 33);
  for (Eigen::Index i = 0; i < m.size(); ++i) EXPECT_EQ(m.data()[i], 0.5f);
}

TEST(Forward, RangeDeterminismAndShapeCheck) {
  for (bool bi : {true, false}) {
    auto cfg = tiny_config();
    cfg.bidirectional = bi;
    const auto net = MaskNet::initialized(cfg, 5);
    const RowMatrix<float> x = RowMatrix<float>::Random(20, 33) * 3.0f;
    const auto a = forward(net, x), b = forward(net, x);
    EXPECT_EQ(a, b);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      EXPECT_GT(a.data()[i], 0.0f);
      EXPECT_LT(a.data()[i], 1.0f);
    }
    EXPECT_EQ(code_of([&] { forward(net, RowMatrix<float>::Zero(5, 32)); }), Errc::invalid_argument);
  }
}

TEST(Forward, BatchMatchesSingleSequences) {
  const auto net = MaskNet::initialized(tiny_config(), 6);
  const int frames = 7, batch = 3;
  std::vector<RowMatrix<float>> seqs;
  RowMatrix<float> stacked(frames * batch, 33);
  for (int b = 0; b < batch; ++b) {
    seqs.push_back(RowMatrix<float>::Random(frames, 33));
    for (int t = 0; t < frames; ++t) stacked.row(t * batch + b) = seqs[b].row(t);
  }
  const auto out = forward_batch(net, stacked, batch);
  for (int b = 0; b < batch; ++b) {
    const auto single = forward(net, seqs[b]);
    for (int t = 0; t < frames; ++t)
      for (int k = 0; k < 33; ++k) EXPECT_NEAR(out(t * batch + b, k), single(t, k), 1e-6);
  }
}

TEST(Forward, DropoutOnlyInTraining) {
  auto net = MaskNet::initialized(tiny_config(), 7);
  const RowMatrix<float> x = RowMatrix<float>::Random(6, 33);
  std::mt19937_64 r1(1), r2(1);
  const auto eval = forward(net, x, &r1);
  EXPECT_EQ(eval, forward(net, x));
  net.set_training(true);
  const auto train = forward(net, x, &r2);
  EXPECT_NE(eval, train);
}

TEST(Tpsa, ClampExamples) {
  std::mt19937_64 rng(3);
  const Spectrogram x = random_spec(rng, 20, 30);
  Spectrogram s = x;
  const RealMatrix mag = x.bins.cwiseAbs();
  EXPECT_EQ(tpsa_target(x, s), mag);  // identity
  s.bins.setZero();
  EXPECT_EQ(tpsa_target(x, s), RealMatrix::Zero(20, 30));  // zero source
  s.bins = -x.bins;
  EXPECT_EQ(tpsa_target(x, s), RealMatrix::Zero(20, 30));  // antiphase
  s.bins = 2.0 * x.bins;
  EXPECT_EQ(tpsa_target(x, s), mag);  // ceiling
}

TEST(Tpsa, BoundsOnRandomPairs) {
  std::mt19937_64 rng(4);
  const Spectrogram x = random_spec(rng, 100, 100), s = random_spec(rng, 100, 100, 2.0);
  const RealMatrix t = tpsa_target(x, s);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    ASSERT_GE(t.data()[i], 0.0);
    ASSERT_LE(t.data()[i], std::abs(x.bins.data()[i]));
  }
  Spectrogram bad = random_spec(rng, 100, 99);
  EXPECT_EQ(code_of([&] { tpsa_target(x, bad); }), Errc::invalid_argument);
}

TEST(Tpsa, OracleMaskAttainsZeroLoss) {
  std::mt19937_64 rng(5);
  Spectrogram x = random_spec(rng, 30, 40);
  x.bins(0, 0) = 0;  // guarded bin
  const Spectrogram s = random_spec(rng, 30, 40);
  const RealMatrix m = oracle_mask(x, s);
  EXPECT_EQ(m(0, 0), 0.0);
  const RealMatrix mag = x.bins.cwiseAbs();
  EXPECT_NEAR(tpsa_loss<double>(m, mag, tpsa_target(x, s)), 0.0, 1e-24);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    ASSERT_GE(m.data()[i], 0.0);
    ASSERT_LE(m.data()[i], 1.0);
  }
}

TEST(TpsaLoss, Examples) {
  const RealMatrix ones = RealMatrix::Ones(3, 4), zeros = RealMatrix::Zero(3, 4);
  EXPECT_EQ(tpsa_loss<double>(ones, ones, ones), 0.0);
  EXPECT_EQ(tpsa_loss<double>(zeros, ones, zeros), 0.0);
  EXPECT_EQ(tpsa_loss<double>(ones, ones, zeros), 1.0);
  EXPECT_EQ(code_of([&] { tpsa_loss<double>(ones, RealMatrix::Ones(3, 5), ones); }), Errc::invalid_argument);
  std::mt19937_64 rng(6);
  for (int i = 0; i < 100; ++i) {
    const RealMatrix a = RealMatrix::Random(5, 5), b = RealMatrix::Random(5, 5), c = RealMatrix::Random(5, 5);
    EXPECT_GE(tpsa_loss<double>(a, b, c), 0.0);
  }
}

TEST(TpsaLoss, GradientMatchesFiniteDifference) {
  const RealMatrix m = (RealMatrix::Random(4, 6).array() + 1) / 2, x = RealMatrix::Random(4, 6).cwiseAbs(),
                   t = RealMatrix::Random(4, 6).cwiseAbs();
  const RealMatrix g = tpsa_loss_gradient<double>(m, x, t);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    RealMatrix up = m, down = m;
    up.data()[i] += 1e-6;
    down.data()[i] -= 1e-6;
    const double num = (tpsa_loss<double>(up, x, t) - tpsa_loss<double>(down, x, t)) / 2e-6;
    EXPECT_NEAR(g.data()[i], num, 1e-8);
  }
}

namespace {

GradientBatch tiny_batch(std::uint64_t seed, int bins, int frames, int batch) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  GradientBatch b;
  b.batch = batch;
  b.features.resize(frames * batch, bins);
  b.magnitude.resize(frames * batch, bins);
  b.target.resize(frames * batch, bins);
  for (Eigen::Index i = 0; i < b.features.size(); ++i) {
    b.magnitude.data()[i] = 2 * u(rng);
    b.features.data()[i] = std::log1p(b.magnitude.data()[i]);
    b.target.data()[i] = b.magnitude.data()[i] * u(rng);
  }
  return b;
}

}  // namespace

TEST(GradientCheck, AnalyticMatchesNumeric) {
  for (bool bi : {true, false}) {
    auto cfg = tiny_config(16, 8);
    cfg.bidirectional = bi;
    const auto net = BlstmMaskNet<double>::initialized(cfg, 21);
    const auto r = gradient_check(net, tiny_batch(1, 16, 4, 2), {.samples = 300});
    EXPECT_GE(r.checked, 200u);
    EXPECT_LT(r.max_relative_error, 1e-3) << "worst index " << r.worst_index;
  }
}

TEST(GradientCheck, ThreeLayersWithoutDropout) {
  auto cfg = tiny_config(16, 6);
  cfg.recurrent_layers = 3;
  cfg.dropout = 0.0;
  const auto net = BlstmMaskNet<double>::initialized(cfg, 22);
  EXPECT_LT(gradient_check(net, tiny_batch(2, 16, 5, 1), {.samples = 250}).max_relative_error, 1e-3);
}

TEST(GradientCheck, CorruptedGradientIsDetected) {
  const auto net = BlstmMaskNet<double>::initialized(tiny_config(16, 8), 23);
  GradientCheckOptions opt;
  opt.samples = 300;
  opt.corrupt = [](std::span<double> g) {
    for (std::size_t i = 0; i < g.size(); i += 7) g[i] = g[i] * 1.5 + 1e-3;
  };
  EXPECT_GT(gradient_check(net, tiny_batch(3, 16, 4, 2), opt).max_relative_error, 1e-1);
}

TEST(GradientCheck, ZeroInputBatch) {
  const auto net = BlstmMaskNet<double>::initialized(tiny_config(16, 8), 24);
  GradientBatch b = tiny_batch(4, 16, 4, 1);
  b.features.setZero();
  const auto r = gradient_check(net, b, {.samples = 300});
  EXPECT_TRUE(std::isfinite(r.max_relative_error));
  EXPECT_LT(r.max_relative_error, 1e-3);
}

TEST(Train, ZeroLearningRateChangesNothing) {
  auto cfg = tiny_config();
  cfg.dropout = 0.0;
  TrainingState state(MaskNet::initialized(cfg, 8));
  const auto before = state.net.parameters();
  TrainConfig tc;
  tc.steps = 5;
  tc.batch_size = 2;
  tc.learning_rate = 0.0;
  std::vector<double> losses;
  const auto after = train(state, FixedSource(small_example(1)), kSmallStft, tc,
                           [&](const TrainRecord& r) { losses.push_back(r.loss); });
  EXPECT_EQ(after.net.parameters(), before);
  ASSERT_EQ(losses.size(), 5u);
  for (double l : losses) EXPECT_NEAR(l, losses[0], 1e-12);
  EXPECT_EQ(after.step, 5);
}

TEST(Train, LossDecreasesAndIsDeterministic) {
  TrainConfig tc;
  tc.steps = 60;
  tc.batch_size = 2;
  tc.learning_rate = 1e-2;
  tc.seed = 99;
  auto run = [&] {
    std::vector<double> losses;
    train(TrainingState(MaskNet::initialized(tiny_config(), 9)), FixedSource(small_example(2)), kSmallStft, tc,
          [&](const TrainRecord& r) { losses.push_back(r.loss); });
    return losses;
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a, b);
  EXPECT_LT(a.back(), 0.5 * a.front());
}

TEST(Train, ResumeReproducesUninterruptedRun) {
  TrainConfig tc;
  tc.steps = 12;
  tc.batch_size = 2;
  tc.seed = 5;
  tc.checkpoint_every = 6;
  const FixedSource src(small_example(3));
  const TrainingState init(MaskNet::initialized(tiny_config(), 10));
  const auto full = train(init, src, kSmallStft, tc);

  testing_support::TempDir dir;
  TrainConfig half = tc;
  half.steps = 6;
  save_checkpoint(train(init, src, kSmallStft, half), dir / "h.ckpt");
  const auto resumed = train(load_training_state(dir / "h.ckpt"), src, kSmallStft, tc);
  EXPECT_EQ(resumed.net.parameters(), full.net.parameters());
}

TEST(Train, RejectsShortStreamAndBinMismatch) {
  TrainConfig tc;
  tc.steps = 10;
  tc.batch_size = 4;
  TrainingState st(MaskNet::initialized(tiny_config(), 1));
  EXPECT_EQ(code_of([&] { train(st, FixedSource(small_example(4), 39), kSmallStft, tc); }), Errc::runtime);
  TrainingState wrong(MaskNet::initialized(tiny_config(40), 1));
  EXPECT_EQ(code_of([&] { train(wrong, FixedSource(small_example(4)), kSmallStft, tc); }), Errc::invalid_argument);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  testing_support::TempDir dir;
  const auto net = MaskNet::initialized(tiny_config(), 11);
  save_checkpoint(net, dir / "n.ckpt");
  const auto back = load_checkpoint(dir / "n.ckpt");
  EXPECT_EQ(back.config(), net.config());
  EXPECT_EQ(back.parameters(), net.parameters());
  const RowMatrix<float> x = RowMatrix<float>::Random(9, 33);
  EXPECT_EQ(forward(back, x), forward(net, x));
}

TEST(Checkpoint, StateRecordsStepSeedAndOptimizer) {
  testing_support::TempDir dir;
  TrainingState st(MaskNet::initialized(tiny_config(), 12));
  st.step = 77;
  st.seed = 1234;
  st.optimizer.first = Eigen::VectorXf::Random(st.net.parameters().size());
  st.optimizer.second = Eigen::VectorXf::Random(st.net.parameters().size()).cwiseAbs();
  save_checkpoint(st, dir / "s.ckpt");
  const auto back = load_training_state(dir / "s.ckpt");
  EXPECT_EQ(back.step, 77);
  EXPECT_EQ(back.seed, 1234u);
  EXPECT_EQ(back.optimizer.first, st.optimizer.first);
  EXPECT_EQ(back.optimizer.second, st.optimizer.second);
}

TEST(Checkpoint, IncompatibleAndTruncated) {
  testing_support::TempDir dir;
  const auto net = MaskNet::initialized(tiny_config(), 13);
  save_checkpoint(net, dir / "n.ckpt");
  EXPECT_EQ(code_of([&] { load_checkpoint(dir / "n.ckpt", tiny_config(34)); }), Errc::incompatible_checkpoint);
  EXPECT_NO_THROW(load_checkpoint(dir / "n.ckpt", tiny_config()));

  auto bytes = read_file(dir / "n.ckpt");
  for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{30}, std::size_t{12}, std::size_t{3}}) {
    write_file(dir / "t.ckpt", std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut)));
    EXPECT_EQ(code_of([&] { load_checkpoint(dir / "t.ckpt"); }), Errc::parse) << "cut at " << cut;
  }
}
