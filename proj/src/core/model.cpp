#include "bespoke/model.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "bespoke/error.hpp"
#include "bespoke/wav.hpp"

namespace bespoke {
namespace {

template <typename S>
using Mat = RowMatrix<S>;
template <typename S>
using MapMat = Eigen::Map<Mat<S>>;
template <typename S>
using ConstMapMat = Eigen::Map<const Mat<S>>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

constexpr std::uint64_t kDropoutTag = 0x64726f70;  // "drop"

template <typename S>
void run_direction(const BlstmMaskNet<S>& net, int layer, int dir, const Mat<S>& x, int batch, int frames,
                   typename ForwardCache<S>::Direction& out) {
  const auto& lay = net.layout().lstm[static_cast<std::size_t>(layer)][static_cast<std::size_t>(dir)];
  const int h = net.config().hidden_units;
  const auto in = x.cols();
  const S* p = net.parameters().data();
  ConstMapMat<S> wx(p + lay.input_weights, 4 * h, in);
  ConstMapMat<S> wh(p + lay.recurrent_weights, 4 * h, h);
  Eigen::Map<const RowVec<S>> bias(p + lay.bias, 4 * h);

  const Eigen::Index rows = static_cast<Eigen::Index>(batch) * frames;
  out.gates.noalias() = x * wx.transpose();
  out.gates.rowwise() += bias;
  out.cell.resize(rows, h);
  out.cell_tanh.resize(rows, h);
  out.hidden.resize(rows, h);

  Mat<S> h_prev = Mat<S>::Zero(batch, h);
  Mat<S> c_prev = Mat<S>::Zero(batch, h);
  for (int s = 0; s < frames; ++s) {
    const int t = dir == 0 ? s : frames - 1 - s;
    const Eigen::Index r0 = static_cast<Eigen::Index>(t) * batch;
    auto g = out.gates.middleRows(r0, batch);
    g.noalias() += h_prev * wh.transpose();
    g.leftCols(2 * h) = g.leftCols(2 * h).array().logistic();
    g.middleCols(2 * h, h) = g.middleCols(2 * h, h).array().tanh();
    g.rightCols(h) = g.rightCols(h).array().logistic();

    auto c = out.cell.middleRows(r0, batch);
    c = g.middleCols(h, h).cwiseProduct(c_prev) + g.leftCols(h).cwiseProduct(g.middleCols(2 * h, h));
    auto tc = out.cell_tanh.middleRows(r0, batch);
    tc = c.array().tanh();
    auto hid = out.hidden.middleRows(r0, batch);
    hid = g.rightCols(h).cwiseProduct(tc);
    h_prev = hid;
    c_prev = c;
  }
}

template <typename S>
void backprop_direction(const BlstmMaskNet<S>& net, int layer, int dir, const ForwardCache<S>& fc,
                        const Mat<S>& d_hidden, S* grad, Mat<S>* d_input) {
  const auto& lay = net.layout().lstm[static_cast<std::size_t>(layer)][static_cast<std::size_t>(dir)];
  const auto& cache = fc.layers[static_cast<std::size_t>(layer)][static_cast<std::size_t>(dir)];
  const Mat<S>& x = fc.inputs[static_cast<std::size_t>(layer)];
  const int h = net.config().hidden_units;
  const int batch = fc.batch;
  const int frames = fc.frames;
  const auto in = x.cols();
  const S* p = net.parameters().data();
  ConstMapMat<S> wx(p + lay.input_weights, 4 * h, in);
  ConstMapMat<S> wh(p + lay.recurrent_weights, 4 * h, h);

  const Eigen::Index rows = static_cast<Eigen::Index>(batch) * frames;
  Mat<S> d_gates(rows, 4 * h);
  Mat<S> dh_next = Mat<S>::Zero(batch, h);
  Mat<S> dc_next = Mat<S>::Zero(batch, h);
  Mat<S> dh(batch, h);
  Mat<S> dc(batch, h);
  for (int s = 0; s < frames; ++s) {
    const int t = dir == 0 ? frames - 1 - s : s;
    const int prev = dir == 0 ? t - 1 : t + 1;
    const bool has_prev = prev >= 0 && prev < frames;
    const Eigen::Index r0 = static_cast<Eigen::Index>(t) * batch;

    const auto g = cache.gates.middleRows(r0, batch);
    const auto ig = g.leftCols(h).array();
    const auto fg = g.middleCols(h, h).array();
    const auto gg = g.middleCols(2 * h, h).array();
    const auto og = g.rightCols(h).array();
    const auto tc = cache.cell_tanh.middleRows(r0, batch).array();

    dh = d_hidden.middleRows(r0, batch) + dh_next;
    dc = (dh.array() * og * (S(1) - tc.square())).matrix() + dc_next;

    auto dg = d_gates.middleRows(r0, batch);
    dg.leftCols(h) = (dc.array() * gg * ig * (S(1) - ig)).matrix();
    if (has_prev) {
      const auto c_prev = cache.cell.middleRows(static_cast<Eigen::Index>(prev) * batch, batch).array();
      dg.middleCols(h, h) = (dc.array() * c_prev * fg * (S(1) - fg)).matrix();
    } else {
      dg.middleCols(h, h).setZero();
    }
    dg.middleCols(2 * h, h) = (dc.array() * ig * (S(1) - gg.square())).matrix();
    dg.rightCols(h) = (dh.array() * tc * og * (S(1) - og)).matrix();

    dc_next = (dc.array() * fg).matrix();
    dh_next.noalias() = dg * wh;
  }

  MapMat<S> g_wx(grad + lay.input_weights, 4 * h, in);
  MapMat<S> g_wh(grad + lay.recurrent_weights, 4 * h, h);
  Eigen::Map<RowVec<S>> g_bias(grad + lay.bias, 4 * h);
  g_wx.noalias() += d_gates.transpose() * x;

  Mat<S> h_prev = Mat<S>::Zero(rows, h);
  const Eigen::Index shifted = rows - batch;
  if (shifted > 0) {
    if (dir == 0) {
      h_prev.bottomRows(shifted) = cache.hidden.topRows(shifted);
    } else {
      h_prev.topRows(shifted) = cache.hidden.bottomRows(shifted);
    }
  }
  g_wh.noalias() += d_gates.transpose() * h_prev;
  g_bias += d_gates.colwise().sum();
  if (d_input) d_input->noalias() += d_gates * wx;
}

template <typename S>
void fill_uniform(S* dst, std::size_t n, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<S>(u(rng));
}

template <typename S>
void fill_orthogonal(S* dst, int n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().template triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  MapMat<S> out(dst, n, n);
  out = q.cast<S>();
}

}  // namespace

void MaskNetConfig::validate() const {
  require(input_bins >= 1, "mask net: input_bins must be positive");
  require(recurrent_layers >= 1, "mask net: at least one recurrent layer required");
  require(hidden_units >= 1, "mask net: hidden_units must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "mask net: dropout probability must lie in [0, 1)");
}

ParameterLayout::ParameterLayout(const MaskNetConfig& config) {
  config.validate();
  const auto h = static_cast<std::size_t>(config.hidden_units);
  std::size_t offset = 0;
  lstm.resize(static_cast<std::size_t>(config.recurrent_layers));
  for (int l = 0; l < config.recurrent_layers; ++l) {
    const auto in = static_cast<std::size_t>(config.layer_input(l));
    for (int d = 0; d < config.directions(); ++d) {
      Lstm& block = lstm[static_cast<std::size_t>(l)][static_cast<std::size_t>(d)];
      block.input_weights = offset;
      offset += 4 * h * in;
      block.recurrent_weights = offset;
      offset += 4 * h * h;
      block.bias = offset;
      offset += 4 * h;
    }
  }
  output_weights = offset;
  offset += static_cast<std::size_t>(config.input_bins) * config.directions() * h;
  output_bias = offset;
  offset += static_cast<std::size_t>(config.input_bins);
  total = offset;
}

template <typename S>
BlstmMaskNet<S>::BlstmMaskNet(MaskNetConfig config)
    : config_(config), layout_(config), params_(Vector::Zero(static_cast<Eigen::Index>(layout_.total))) {}

template <typename S>
BlstmMaskNet<S> BlstmMaskNet<S>::initialized(MaskNetConfig config, std::uint64_t seed) {
  BlstmMaskNet net(config);
  std::mt19937_64 rng = derive_rng(seed, 0);
  S* p = net.params_.data();
  const int h = config.hidden_units;
  for (int l = 0; l < config.recurrent_layers; ++l) {
    const int in = config.layer_input(l);
    for (int d = 0; d < config.directions(); ++d) {
      const auto& block = net.layout_.lstm[static_cast<std::size_t>(l)][static_cast<std::size_t>(d)];
      fill_uniform(p + block.input_weights, static_cast<std::size_t>(4 * h) * in, 1.0 / std::sqrt(in), rng);
      for (int gate = 0; gate < 4; ++gate) {
        // Row block `gate` of the 4H x H kernel is itself H x H.
        fill_orthogonal(p + block.recurrent_weights + static_cast<std::size_t>(gate) * h * h, h, rng);
      }
      std::fill_n(p + block.bias, 4 * h, S(0));
      std::fill_n(p + block.bias + h, h, S(1));
    }
  }
  const int width = config.directions() * h;
  fill_uniform(p + net.layout_.output_weights, static_cast<std::size_t>(config.input_bins) * width,
               1.0 / std::sqrt(width), rng);
  std::fill_n(p + net.layout_.output_bias, config.input_bins, S(0));
  return net;
}

template <typename S>
RowMatrix<S> forward_batch(const BlstmMaskNet<S>& net, const RowMatrix<S>& inputs, int batch,
                           std::mt19937_64* dropout_rng, ForwardCache<S>* cache) {
  const MaskNetConfig& c = net.config();
  require(inputs.cols() == c.input_bins, "mask net: feature matrix has " + std::to_string(inputs.cols()) +
                                             " bins, network expects " + std::to_string(c.input_bins));
  require(batch >= 1 && inputs.rows() % batch == 0, "mask net: rows not divisible by batch size");
  require(inputs.rows() > 0, "mask net: empty input");

  ForwardCache<S> local;
  ForwardCache<S>& fc = cache ? *cache : local;
  fc.batch = batch;
  fc.frames = static_cast<int>(inputs.rows() / batch);
  fc.inputs.clear();
  fc.layers.assign(static_cast<std::size_t>(c.recurrent_layers), {});

  const int h = c.hidden_units;
  Mat<S> x = inputs;
  for (int l = 0; l < c.recurrent_layers; ++l) {
    fc.inputs.push_back(std::move(x));
    Mat<S> out(inputs.rows(), c.directions() * h);
    for (int d = 0; d < c.directions(); ++d) {
      auto& dir = fc.layers[static_cast<std::size_t>(l)][static_cast<std::size_t>(d)];
      run_direction(net, l, d, fc.inputs.back(), batch, fc.frames, dir);
      out.middleCols(d * h, h) = dir.hidden;
    }
    x = std::move(out);
  }
  fc.recurrent_out = std::move(x);

  if (net.training() && dropout_rng && c.dropout > 0) {
    std::bernoulli_distribution keep(1.0 - c.dropout);
    const S scale = S(1.0 / (1.0 - c.dropout));
    fc.dropout_scale.resize(fc.recurrent_out.rows(), fc.recurrent_out.cols());
    for (Eigen::Index i = 0; i < fc.dropout_scale.size(); ++i) {
      fc.dropout_scale.data()[i] = keep(*dropout_rng) ? scale : S(0);
    }
    fc.dropped = fc.recurrent_out.cwiseProduct(fc.dropout_scale);
  } else {
    fc.dropout_scale.resize(0, 0);
    fc.dropped = fc.recurrent_out;
  }

  const S* p = net.parameters().data();
  ConstMapMat<S> wo(p + net.layout().output_weights, c.input_bins, c.directions() * h);
  Eigen::Map<const RowVec<S>> bo(p + net.layout().output_bias, c.input_bins);
  fc.mask.noalias() = fc.dropped * wo.transpose();
  fc.mask.rowwise() += bo;
  fc.mask = fc.mask.array().logistic();
  return fc.mask;
}

template <typename S>
void backward_batch(const BlstmMaskNet<S>& net, const ForwardCache<S>& fc, const RowMatrix<S>& grad_mask,
                    typename BlstmMaskNet<S>::Vector& grad) {
  const MaskNetConfig& c = net.config();
  require(grad.size() == static_cast<Eigen::Index>(net.layout().total), "backward: gradient vector size mismatch");
  require(grad_mask.rows() == fc.mask.rows() && grad_mask.cols() == fc.mask.cols(),
          "backward: mask gradient shape mismatch");
  const int h = c.hidden_units;
  const int width = c.directions() * h;
  S* g = grad.data();
  const S* p = net.parameters().data();

  const Mat<S> d_logits = (grad_mask.array() * fc.mask.array() * (S(1) - fc.mask.array())).matrix();
  MapMat<S> g_wo(g + net.layout().output_weights, c.input_bins, width);
  Eigen::Map<RowVec<S>> g_bo(g + net.layout().output_bias, c.input_bins);
  g_wo.noalias() += d_logits.transpose() * fc.dropped;
  g_bo += d_logits.colwise().sum();

  ConstMapMat<S> wo(p + net.layout().output_weights, c.input_bins, width);
  Mat<S> d_out = d_logits * wo;
  if (fc.dropout_scale.size() > 0) d_out.array() *= fc.dropout_scale.array();

  for (int l = c.recurrent_layers - 1; l >= 0; --l) {
    Mat<S> d_input;
    if (l > 0) d_input = Mat<S>::Zero(d_out.rows(), c.layer_input(l));
    for (int d = 0; d < c.directions(); ++d) {
      const Mat<S> d_hidden = d_out.middleCols(d * h, h);
      backprop_direction(net, l, d, fc, d_hidden, g, l > 0 ? &d_input : nullptr);
    }
    d_out = std::move(d_input);
  }
}

RowMatrix<float> forward(const MaskNet& net, const RowMatrix<float>& features, std::mt19937_64* dropout_rng) {
  return forward_batch(net, features, 1, dropout_rng);
}

RowMatrix<float> featurize(const Spectrogram& mix) {
  return mix.bins.cwiseAbs().array().log1p().cast<float>().matrix();
}

RealMatrix tpsa_target(const Spectrogram& mix, const Spectrogram& source) {
  require(mix.bins.rows() == source.bins.rows() && mix.bins.cols() == source.bins.cols(),
          "tpsa_target: mixture and source spectrograms differ in shape");
  RealMatrix t(mix.bins.rows(), mix.bins.cols());
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const std::complex<double> x = mix.bins.data()[i];
    const std::complex<double> s = source.bins.data()[i];
    const double projected = std::abs(s) * std::cos(std::arg(s) - std::arg(x));
    t.data()[i] = std::min(std::max(projected, 0.0), std::abs(x));
  }
  return t;
}

RealMatrix oracle_mask(const Spectrogram& mix, const Spectrogram& source) {
  const RealMatrix t = tpsa_target(mix, source);
  RealMatrix m(t.rows(), t.cols());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double mag = std::abs(mix.bins.data()[i]);
    m.data()[i] = mag > 0 ? std::min(1.0, t.data()[i] / mag) : 0.0;
  }
  return m;
}

template <typename S>
double tpsa_loss(const RowMatrix<S>& mask, const RowMatrix<S>& mix_magnitude, const RowMatrix<S>& target) {
  require(mask.rows() == mix_magnitude.rows() && mask.cols() == mix_magnitude.cols() &&
              mask.rows() == target.rows() && mask.cols() == target.cols(),
          "tpsa_loss: shape mismatch");
  require(mask.size() > 0, "tpsa_loss: empty input");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    const double r = static_cast<double>(mask.data()[i]) * mix_magnitude.data()[i] - target.data()[i];
    sum += r * r;
  }
  return sum / static_cast<double>(mask.size());
}

template <typename S>
RowMatrix<S> tpsa_loss_gradient(const RowMatrix<S>& mask, const RowMatrix<S>& mix_magnitude,
                                const RowMatrix<S>& target) {
  require(mask.rows() == target.rows() && mask.cols() == target.cols(), "tpsa_loss_gradient: shape mismatch");
  const S scale = S(2.0 / static_cast<double>(mask.size()));
  return ((mask.array() * mix_magnitude.array() - target.array()) * mix_magnitude.array() * scale).matrix();
}

void TrainConfig::validate() const {
  require(steps >= 1, "train: steps must be at least 1");
  require(batch_size >= 1, "train: batch_size must be positive");
  require(learning_rate >= 0 && std::isfinite(learning_rate), "train: learning rate must be non-negative");
  require(grad_clip_norm > 0, "train: gradient clip norm must be positive");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && epsilon > 0, "train: bad optimizer constants");
  require(checkpoint_every >= 1, "train: checkpoint_every must be at least 1");
}

TrainingState::TrainingState(MaskNet n) : net(std::move(n)) {
  const auto size = net.parameters().size();
  optimizer.first = Eigen::VectorXf::Zero(size);
  optimizer.second = Eigen::VectorXf::Zero(size);
}

TrainingBatch make_batch(std::span<const TrainingExample> examples, const StftParams& stft_params) {
  require(!examples.empty(), "make_batch: no examples");
  const int batch = static_cast<int>(examples.size());
  TrainingBatch out;
  out.batch = batch;
  for (int b = 0; b < batch; ++b) {
    const Spectrogram mix = stft(examples[static_cast<std::size_t>(b)].mix, stft_params);
    const Spectrogram ref = stft(examples[static_cast<std::size_t>(b)].reference, stft_params);
    const auto frames = mix.frames();
    const auto bins = mix.bins.cols();
    if (b == 0) {
      out.features.resize(frames * batch, bins);
      out.magnitude.resize(frames * batch, bins);
      out.target.resize(frames * batch, bins);
    }
    require(frames * batch == out.features.rows(), "make_batch: examples differ in length");
    const RowMatrix<float> feats = featurize(mix);
    const RealMatrix mag = mix.magnitude();
    const RealMatrix target = tpsa_target(mix, ref);
    for (Eigen::Index t = 0; t < frames; ++t) {
      out.features.row(t * batch + b) = feats.row(t);
      out.magnitude.row(t * batch + b) = mag.row(t).cast<float>();
      out.target.row(t * batch + b) = target.row(t).cast<float>();
    }
  }
  return out;
}

TrainingState train(TrainingState state, const ExampleSource& stream, const StftParams& stft_params,
                    const TrainConfig& tc, const LogSink& log, const CheckpointSink& checkpoint) {
  tc.validate();
  stft_params.validate();
  MaskNet& net = state.net;
  require(net.config().input_bins == stft_params.bins(),
          "train: network expects " + std::to_string(net.config().input_bins) + " bins, STFT yields " +
              std::to_string(stft_params.bins()));
  const auto needed = static_cast<std::size_t>(tc.steps) * static_cast<std::size_t>(tc.batch_size);
  if (stream.size() < needed) {
    fail(Errc::runtime, "train: example stream holds " + std::to_string(stream.size()) + " examples but " +
                            std::to_string(tc.steps) + " steps of batch " + std::to_string(tc.batch_size) +
                            " need " + std::to_string(needed));
  }
  const auto n_params = net.parameters().size();
  if (state.optimizer.first.size() != n_params) state.optimizer.first = Eigen::VectorXf::Zero(n_params);
  if (state.optimizer.second.size() != n_params) state.optimizer.second = Eigen::VectorXf::Zero(n_params);
  state.seed = tc.seed;

  const auto start = std::chrono::steady_clock::now();
  MaskNet::Vector grad(n_params);
  ForwardCache<float> cache;
  std::vector<TrainingExample> examples(static_cast<std::size_t>(tc.batch_size));
  net.set_training(true);
  for (std::int64_t s = state.step + 1; s <= tc.steps; ++s) {
    const auto first = static_cast<std::size_t>(s - 1) * static_cast<std::size_t>(tc.batch_size);
    for (std::size_t b = 0; b < examples.size(); ++b) examples[b] = stream.at(first + b);
    const TrainingBatch batch = make_batch(examples, stft_params);

    std::mt19937_64 dropout_rng = derive_rng(tc.seed ^ kDropoutTag, static_cast<std::uint64_t>(s));
    const RowMatrix<float> mask = forward_batch(net, batch.features, batch.batch, &dropout_rng, &cache);
    const double loss = tpsa_loss(mask, batch.magnitude, batch.target);
    if (!std::isfinite(loss)) {
      std::ostringstream os;
      os << "train: non-finite loss at step " << s << "; batch:";
      for (std::size_t b = 0; b < examples.size(); ++b) os << ' ' << stream.describe(first + b) << ';';
      net.set_training(false);
      fail(Errc::numeric, os.str());
    }
    grad.setZero();
    backward_batch(net, cache, tpsa_loss_gradient(mask, batch.magnitude, batch.target), grad);

    const double norm = grad.template cast<double>().norm();
    if (norm > tc.grad_clip_norm) grad *= static_cast<float>(tc.grad_clip_norm / norm);

    const auto b1 = static_cast<float>(tc.beta1);
    const auto b2 = static_cast<float>(tc.beta2);
    const auto correction1 = static_cast<float>(1.0 - std::pow(tc.beta1, static_cast<double>(s)));
    const auto correction2 = static_cast<float>(1.0 - std::pow(tc.beta2, static_cast<double>(s)));
    auto& m = state.optimizer.first;
    auto& v = state.optimizer.second;
    m = b1 * m + (1.0f - b1) * grad;
    v = b2 * v + (1.0f - b2) * grad.cwiseAbs2();
    const auto lr = static_cast<float>(tc.learning_rate);
    const auto eps = static_cast<float>(tc.epsilon);
    net.parameters().array() -=
        lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + eps);

    state.step = s;
    if (log) {
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      log({s, wall, loss});
    }
    if (checkpoint && (s % tc.checkpoint_every == 0 || s == tc.steps)) {
      net.set_training(false);
      checkpoint(state);
      net.set_training(true);
    }
  }
  net.set_training(false);
  return state;
}

GradientCheckResult gradient_check(const BlstmMaskNet<double>& net_in, const GradientBatch& batch,
                                   const GradientCheckOptions& options) {
  BlstmMaskNet<double> net = net_in;
  net.set_training(true);
  const auto loss_of = [&](const BlstmMaskNet<double>& n) {
    std::mt19937_64 rng(options.dropout_seed);
    const RowMatrix<double> mask = forward_batch(n, batch.features, batch.batch, &rng);
    return tpsa_loss(mask, batch.magnitude, batch.target);
  };

  std::mt19937_64 rng(options.dropout_seed);
  ForwardCache<double> cache;
  const RowMatrix<double> mask = forward_batch(net, batch.features, batch.batch, &rng, &cache);
  BlstmMaskNet<double>::Vector grad = BlstmMaskNet<double>::Vector::Zero(net.parameters().size());
  backward_batch(net, cache, tpsa_loss_gradient(mask, batch.magnitude, batch.target), grad);
  if (options.corrupt) options.corrupt(std::span<double>(grad.data(), static_cast<std::size_t>(grad.size())));

  std::vector<std::size_t> indices(static_cast<std::size_t>(grad.size()));
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  if (options.samples < indices.size()) {
    std::vector<std::size_t> chosen;
    std::mt19937_64 pick(options.seed);
    std::sample(indices.begin(), indices.end(), std::back_inserter(chosen), options.samples, pick);
    indices = std::move(chosen);
  }

  GradientCheckResult result;
  for (std::size_t idx : indices) {
    double& p = net.parameters()[static_cast<Eigen::Index>(idx)];
    const double saved = p;
    p = saved + options.step;
    const double up = loss_of(net);
    p = saved - options.step;
    const double down = loss_of(net);
    p = saved;
    const double numeric = (up - down) / (2.0 * options.step);
    const double analytic = grad[static_cast<Eigen::Index>(idx)];
    const double rel =
        std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    if (rel > result.max_relative_error || result.checked == 0) {
      result.max_relative_error = std::max(result.max_relative_error, rel);
      result.worst_index = idx;
    }
    ++result.checked;
  }
  return result;
}

namespace {

constexpr char kMagic[8] = {'B', 'S', 'P', 'K', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr int kConfigVersion = 1;

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int width) {
  for (int i = 0; i < width; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_floats(std::vector<std::uint8_t>& out, const float* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) put_le(out, std::bit_cast<std::uint32_t>(data[i]), 4);
}

nlohmann::json config_json(const MaskNetConfig& c) {
  return {{"version", kConfigVersion},          {"input_bins", c.input_bins},
          {"recurrent_layers", c.recurrent_layers}, {"hidden_units", c.hidden_units},
          {"bidirectional", c.bidirectional},     {"dropout", c.dropout}};
}

void write_checkpoint(const std::filesystem::path& path, const MaskNet& net, const AdamState* optimizer,
                      std::int64_t step, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(net.parameters().size());
  nlohmann::json arrays = nlohmann::json::array({{{"name", "parameters"}, {"count", n}}});
  if (optimizer) {
    arrays.push_back({{"name", "adam_first"}, {"count", n}});
    arrays.push_back({{"name", "adam_second"}, {"count", n}});
  }
  const nlohmann::json header = {{"format", "bespoke-masknet"},
                                 {"config", config_json(net.config())},
                                 {"step", step},
                                 {"seed", seed},
                                 {"arrays", arrays},
                                 {"metadata", {{"dtype", "float32-le"}, {"gate_order", "ifgo"}}}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_le(out, kCheckpointVersion, 4);
  put_le(out, text.size(), 8);
  out.insert(out.end(), text.begin(), text.end());
  put_floats(out, net.parameters().data(), n);
  if (optimizer) {
    put_floats(out, optimizer->first.data(), n);
    put_floats(out, optimizer->second.data(), n);
  }
  write_file(path, out);
}

struct Cursor {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  std::uint64_t le(int width, const char* what) {
    if (bytes.size() - pos < static_cast<std::size_t>(width)) {
      throw ParseError(std::string("checkpoint truncated reading ") + what, pos);
    }
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    pos += static_cast<std::size_t>(width);
    return v;
  }
  void floats(float* dst, std::size_t n, const char* what) {
    if ((bytes.size() - pos) / 4 < n) throw ParseError(std::string("checkpoint truncated reading ") + what, pos);
    for (std::size_t i = 0; i < n; ++i) dst[i] = std::bit_cast<float>(static_cast<std::uint32_t>(le(4, what)));
  }
};

}  // namespace

void save_checkpoint(const TrainingState& state, const std::filesystem::path& path) {
  write_checkpoint(path, state.net, &state.optimizer, state.step, state.seed);
}

void save_checkpoint(const MaskNet& net, const std::filesystem::path& path) {
  write_checkpoint(path, net, nullptr, 0, 0);
}

TrainingState load_training_state(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw ParseError("not a mask-net checkpoint (bad magic)", 0);
  }
  Cursor cur{bytes, 8};
  const auto version = cur.le(4, "format version");
  if (version != kCheckpointVersion) {
    fail(Errc::incompatible_checkpoint, "unsupported checkpoint format version " + std::to_string(version));
  }
  const auto header_len = cur.le(8, "header length");
  if (bytes.size() - cur.pos < header_len) throw ParseError("checkpoint truncated inside header", cur.pos);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(cur.pos),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(cur.pos + header_len));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header is not valid JSON: ") + e.what(), cur.pos);
  }
  cur.pos += header_len;

  MaskNetConfig config;
  std::vector<std::pair<std::string, std::size_t>> arrays;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  try {
    const auto& c = header.at("config");
    if (c.at("version").get<int>() != kConfigVersion) {
      fail(Errc::incompatible_checkpoint, "unsupported network config version");
    }
    config.input_bins = c.at("input_bins").get<int>();
    config.recurrent_layers = c.at("recurrent_layers").get<int>();
    config.hidden_units = c.at("hidden_units").get<int>();
    config.bidirectional = c.at("bidirectional").get<bool>();
    config.dropout = c.at("dropout").get<double>();
    step = header.at("step").get<std::int64_t>();
    seed = header.at("seed").get<std::uint64_t>();
    for (const auto& a : header.at("arrays")) {
      arrays.emplace_back(a.at("name").get<std::string>(), a.at("count").get<std::size_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header malformed: ") + e.what(), 20);
  }

  try {
    config.validate();
  } catch (const Error& e) {
    fail(Errc::incompatible_checkpoint, std::string("checkpoint config invalid: ") + e.what());
  }
  TrainingState state{MaskNet(config)};
  state.step = step;
  state.seed = seed;
  const auto expected = static_cast<std::size_t>(state.net.parameters().size());
  bool have_params = false;
  bool have_first = false;
  bool have_second = false;
  for (const auto& [name, count] : arrays) {
    if (count != expected) {
      fail(Errc::incompatible_checkpoint, "checkpoint array \"" + name + "\" holds " + std::to_string(count) +
                                              " values; config implies " + std::to_string(expected));
    }
    float* dst = nullptr;
    if (name == "parameters") {
      dst = state.net.parameters().data();
      have_params = true;
    } else if (name == "adam_first") {
      dst = state.optimizer.first.data();
      have_first = true;
    } else if (name == "adam_second") {
      dst = state.optimizer.second.data();
      have_second = true;
    } else {
      fail(Errc::incompatible_checkpoint, "unknown checkpoint array \"" + name + "\"");
    }
    cur.floats(dst, count, name.c_str());
  }
  if (!have_params) fail(Errc::incompatible_checkpoint, "checkpoint has no parameter array");
  if (have_first != have_second) fail(Errc::incompatible_checkpoint, "checkpoint optimizer state incomplete");
  if (cur.pos != bytes.size()) throw ParseError("trailing bytes after checkpoint arrays", cur.pos);
  return state;
}

MaskNet load_checkpoint(const std::filesystem::path& path) { return load_training_state(path).net; }

MaskNet load_checkpoint(const std::filesystem::path& path, const MaskNetConfig& expected) {
  MaskNet net = load_checkpoint(path);
  if (!(net.config() == expected)) {
    fail(Errc::incompatible_checkpoint,
         "checkpoint network config " + config_json(net.config()).dump() + " does not match expected " +
             config_json(expected).dump());
  }
  return net;
}

template class BlstmMaskNet<float>;
template class BlstmMaskNet<double>;
template RowMatrix<float> forward_batch(const BlstmMaskNet<float>&, const RowMatrix<float>&, int, std::mt19937_64*,
                                        ForwardCache<float>*);
template RowMatrix<double> forward_batch(const BlstmMaskNet<double>&, const RowMatrix<double>&, int,
                                         std::mt19937_64*, ForwardCache<double>*);
template void backward_batch(const BlstmMaskNet<float>&, const ForwardCache<float>&, const RowMatrix<float>&,
                             BlstmMaskNet<float>::Vector&);
template void backward_batch(const BlstmMaskNet<double>&, const ForwardCache<double>&, const RowMatrix<double>&,
                             BlstmMaskNet<double>::Vector&);
template double tpsa_loss(const RowMatrix<float>&, const RowMatrix<float>&, const RowMatrix<float>&);
template double tpsa_loss(const RowMatrix<double>&, const RowMatrix<double>&, const RowMatrix<double>&);
template RowMatrix<float> tpsa_loss_gradient(const RowMatrix<float>&, const RowMatrix<float>&,
                                             const RowMatrix<float>&);
template RowMatrix<double> tpsa_loss_gradient(const RowMatrix<double>&, const RowMatrix<double>&,
                                              const RowMatrix<double>&);

}  // namespace bespoke
