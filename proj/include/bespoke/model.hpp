#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bespoke/augment.hpp"
#include "bespoke/stft.hpp"

namespace bespoke {

struct MaskNetConfig {
  int input_bins = 513;
  int recurrent_layers = 2;
  int hidden_units = 300;  // per direction
  bool bidirectional = true;
  double dropout = 0.3;  // zeroing probability on the last recurrent layer's output

  void validate() const;
  int directions() const noexcept { return bidirectional ? 2 : 1; }
  int layer_input(int layer) const noexcept { return layer == 0 ? input_bins : directions() * hidden_units; }

  bool operator==(const MaskNetConfig&) const = default;
};

// Offsets of every weight block inside the flat parameter vector.
struct ParameterLayout {
  struct Lstm {
    std::size_t input_weights;      // 4H x in, gate order i, f, g, o
    std::size_t recurrent_weights;  // 4H x H
    std::size_t bias;               // 4H
  };
  std::vector<std::array<Lstm, 2>> lstm;  // [layer][direction]
  std::size_t output_weights = 0;         // bins x (directions * H)
  std::size_t output_bias = 0;            // bins
  std::size_t total = 0;

  explicit ParameterLayout(const MaskNetConfig& config);
};

// Recurrent mask estimator: stacked (B)LSTM layers, dropout on the last
// recurrent output during training, then an affine map to one logistic mask
// value per frequency bin. Scalar is float for training and inference and
// double for the finite-difference check.
template <typename Scalar>
class BlstmMaskNet {
 public:
  using Matrix = RowMatrix<Scalar>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  // All parameters zero.
  explicit BlstmMaskNet(MaskNetConfig config);

  // Fan-in uniform affine weights, orthogonal recurrent kernels, forget-gate
  // bias 1.
  static BlstmMaskNet initialized(MaskNetConfig config, std::uint64_t seed);

  const MaskNetConfig& config() const noexcept { return config_; }
  const ParameterLayout& layout() const noexcept { return layout_; }
  Vector& parameters() noexcept { return params_; }
  const Vector& parameters() const noexcept { return params_; }

  bool training() const noexcept { return training_; }
  void set_training(bool on) noexcept { training_ = on; }

  template <typename Other>
  BlstmMaskNet<Other> cast() const {
    BlstmMaskNet<Other> out(config_);
    out.parameters() = params_.template cast<Other>();
    out.set_training(training_);
    return out;
  }

 private:
  MaskNetConfig config_;
  ParameterLayout layout_;
  Vector params_;
  bool training_ = false;
};

using MaskNet = BlstmMaskNet<float>;

// Activations kept for back-propagation. Rows are time-major: row t*batch + b.
template <typename Scalar>
struct ForwardCache {
  using Matrix = RowMatrix<Scalar>;
  struct Direction {
    Matrix gates;  // post-activation i, f, g, o
    Matrix cell;
    Matrix cell_tanh;
    Matrix hidden;
  };
  int batch = 1;
  int frames = 0;
  std::vector<Matrix> inputs;  // input to each recurrent layer
  std::vector<std::array<Direction, 2>> layers;
  Matrix recurrent_out;  // last recurrent layer output before dropout
  Matrix dropout_scale;  // empty when dropout is inactive
  Matrix dropped;
  Matrix mask;
};

// Batched forward over `batch` sequences of equal length stored time-major.
// Dropout is applied only when the net is in training mode and a generator is
// supplied.
template <typename Scalar>
RowMatrix<Scalar> forward_batch(const BlstmMaskNet<Scalar>& net, const RowMatrix<Scalar>& inputs, int batch,
                                std::mt19937_64* dropout_rng = nullptr, ForwardCache<Scalar>* cache = nullptr);

// Accumulates d(loss)/d(parameters) into `grad` given d(loss)/d(mask).
template <typename Scalar>
void backward_batch(const BlstmMaskNet<Scalar>& net, const ForwardCache<Scalar>& cache,
                    const RowMatrix<Scalar>& grad_mask, typename BlstmMaskNet<Scalar>::Vector& grad);

// Single-sequence forward: features (frames x bins) -> mask in (0, 1).
RowMatrix<float> forward(const MaskNet& net, const RowMatrix<float>& features,
                         std::mt19937_64* dropout_rng = nullptr);

// log(1 + |X|)
RowMatrix<float> featurize(const Spectrogram& mix);

// Truncated phase-sensitive target: clamp(|S| cos(angle S - angle X), 0, |X|).
RealMatrix tpsa_target(const Spectrogram& mix, const Spectrogram& source);

// Mean over bins of (mask * |X| - T)^2.
template <typename Scalar>
double tpsa_loss(const RowMatrix<Scalar>& mask, const RowMatrix<Scalar>& mix_magnitude,
                 const RowMatrix<Scalar>& target);

// d(tpsa_loss)/d(mask).
template <typename Scalar>
RowMatrix<Scalar> tpsa_loss_gradient(const RowMatrix<Scalar>& mask, const RowMatrix<Scalar>& mix_magnitude,
                                     const RowMatrix<Scalar>& target);

// T / |X| where |X| > 0, else 0. Attains zero tPSA loss.
RealMatrix oracle_mask(const Spectrogram& mix, const Spectrogram& source);

struct TrainConfig {
  std::int64_t steps = 2000;
  int batch_size = 4;
  double learning_rate = 1e-3;
  double grad_clip_norm = 5.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 500;

  void validate() const;
};

struct AdamState {
  Eigen::VectorXf first;
  Eigen::VectorXf second;
};

struct TrainingState {
  MaskNet net;
  AdamState optimizer;
  std::int64_t step = 0;  // completed steps
  std::uint64_t seed = 0;

  explicit TrainingState(MaskNet n);
};

struct TrainRecord {
  std::int64_t step = 0;
  double wall_time_s = 0.0;
  double loss = 0.0;
};

using LogSink = std::function<void(const TrainRecord&)>;
using CheckpointSink = std::function<void(const TrainingState&)>;

// Runs steps state.step + 1 .. tc.steps. Step s draws stream elements
// [(s - 1) * batch, s * batch) and a dropout generator derived from (seed, s),
// so a resumed run reproduces an uninterrupted one.
TrainingState train(TrainingState state, const ExampleSource& stream, const StftParams& stft,
                    const TrainConfig& tc, const LogSink& log = {}, const CheckpointSink& checkpoint = {});

// Assembles features, |X| and tPSA targets for a batch of examples.
struct TrainingBatch {
  RowMatrix<float> features;
  RowMatrix<float> magnitude;
  RowMatrix<float> target;
  int batch = 1;
};
TrainingBatch make_batch(std::span<const TrainingExample> examples, const StftParams& stft);

struct GradientCheckOptions {
  double step = 1e-5;
  std::size_t samples = 400;
  std::uint64_t seed = 11;
  std::uint64_t dropout_seed = 3;
  // Test hook applied to the analytic gradient before comparison.
  std::function<void(std::span<double>)> corrupt;
};

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
};

struct GradientBatch {
  RowMatrix<double> features;
  RowMatrix<double> magnitude;
  RowMatrix<double> target;
  int batch = 1;
};

// Central differences on randomly sampled parameters against the analytic
// gradient of tpsa_loss. Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradientCheckResult gradient_check(const BlstmMaskNet<double>& net, const GradientBatch& batch,
                                   const GradientCheckOptions& options = {});

// Binary checkpoint: magic, format version, JSON header (config, step, seed,
// array table, metadata), then little-endian float32 arrays.
void save_checkpoint(const TrainingState& state, const std::filesystem::path& path);
void save_checkpoint(const MaskNet& net, const std::filesystem::path& path);
TrainingState load_training_state(const std::filesystem::path& path);
MaskNet load_checkpoint(const std::filesystem::path& path);
// Throws incompatible_checkpoint when the stored config differs.
MaskNet load_checkpoint(const std::filesystem::path& path, const MaskNetConfig& expected);

}  // namespace bespoke
