#include "bespoke/separate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "bespoke/error.hpp"

namespace bespoke {
namespace {

SeparationResult finish(const AudioClip& mixture, const Spectrogram& spec, RealMatrix mask) {
  SeparationResult out;
  out.estimate = istft(apply_mask(spec, mask));
  out.residual = mixture;
  for (std::size_t i = 0; i < mixture.size(); ++i) out.residual.samples[i] -= out.estimate.samples[i];
  out.mean_mask = mask.size() > 0 ? mask.mean() : 0.0;
  const double e_mix = energy(mixture.samples);
  out.masked_energy_fraction = e_mix > 0 ? energy(out.estimate.samples) / e_mix : 0.0;
  out.mask = std::move(mask);
  return out;
}

// Ramp weight for position j of an overlap of n frames; up(j) + up(n-1-j) = 1.
double ramp_up(Eigen::Index j, Eigen::Index n) {
  const double s = std::sin(0.5 * std::numbers::pi * (static_cast<double>(j) + 0.5) / static_cast<double>(n));
  return s * s;
}

}  // namespace

RealMatrix infer_mask(const Spectrogram& mix, const MaskNet& net, const ChunkSpec& chunk) {
  require(!net.training(), "separate: network must be in evaluation mode");
  require(chunk.length > 0 && chunk.overlap >= 0 && chunk.overlap < chunk.length,
          "separate: chunk overlap must be non-negative and shorter than the chunk");
  const RowMatrix<float> features = featurize(mix);
  const Eigen::Index frames = features.rows();
  const double frame_rate = static_cast<double>(mix.sample_rate) / mix.params.hop_length;
  const auto chunk_frames = std::max<Eigen::Index>(1, std::llround(chunk.length * frame_rate));
  if (frames <= chunk_frames) return forward(net, features).cast<double>();

  const auto overlap = std::min<Eigen::Index>(chunk_frames - 1, std::llround(chunk.overlap * frame_rate));
  const Eigen::Index advance = chunk_frames - overlap;
  RealMatrix acc = RealMatrix::Zero(frames, features.cols());
  Eigen::VectorXd weight = Eigen::VectorXd::Zero(frames);
  for (Eigen::Index start = 0;; start += advance) {
    const Eigen::Index len = std::min(chunk_frames, frames - start);
    const bool first = start == 0;
    const bool last = start + len >= frames;
    const RealMatrix m = forward(net, features.middleRows(start, len)).cast<double>();
    for (Eigen::Index j = 0; j < len; ++j) {
      double w = 1.0;
      if (!first && j < overlap) w *= ramp_up(j, overlap);
      if (!last && j >= len - overlap) w *= ramp_up(len - 1 - j, overlap);
      acc.row(start + j) += w * m.row(j);
      weight(start + j) += w;
    }
    if (last) break;
  }
  for (Eigen::Index t = 0; t < frames; ++t) acc.row(t) /= weight(t);
  return acc.cwiseMax(0.0).cwiseMin(1.0);
}

SeparationResult separate(const AudioClip& mixture, const MaskNet& net, const StftParams& stft_params,
                          const ChunkSpec& chunk) {
  validate(mixture);
  if (mixture.size() < static_cast<std::size_t>(stft_params.window_length)) {
    fail(Errc::too_short, "separate: mixture has " + std::to_string(mixture.size()) +
                              " samples, shorter than one STFT window (" +
                              std::to_string(stft_params.window_length) + ")");
  }
  const Spectrogram spec = stft(mixture, stft_params);
  return finish(mixture, spec, infer_mask(spec, net, chunk));
}

SeparationResult separate_with_mask(const AudioClip& mixture, const RealMatrix& mask, const StftParams& stft_params) {
  validate(mixture);
  const Spectrogram spec = stft(mixture, stft_params);
  return finish(mixture, spec, mask);
}

double si_sdr(const AudioClip& estimate, const AudioClip& reference) {
  require(estimate.size() == reference.size(), "si_sdr: estimate has " + std::to_string(estimate.size()) +
                                                   " samples, reference " + std::to_string(reference.size()));
  const double ref_energy = energy(reference.samples);
  require(ref_energy > 0, "si_sdr: reference is silent");
  double dot = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) dot += estimate.samples[i] * reference.samples[i];
  const double alpha = dot / ref_energy;
  double target = 0.0;
  double error = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = alpha * reference.samples[i];
    const double e = s - estimate.samples[i];
    target += s * s;
    error += e * e;
  }
  if (error <= target * std::pow(10.0, -kSiSdrCap / 10.0)) return kSiSdrCap;
  if (target <= 0.0) return -kSiSdrCap;
  return std::min(kSiSdrCap, 10.0 * std::log10(target / error));
}

}  // namespace bespoke
