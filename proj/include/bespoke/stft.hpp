#pragma once

#include <complex>

#include <Eigen/Core>

#include "bespoke/audio.hpp"

namespace bespoke {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using RealMatrix = RowMatrix<double>;
using ComplexMatrix = RowMatrix<std::complex<double>>;

enum class WindowKind { sqrt_hann, hann, rectangular };

struct StftParams {
  int window_length = 1024;
  int hop_length = 256;
  int fft_size = 1024;
  WindowKind window = WindowKind::sqrt_hann;

  int bins() const noexcept { return fft_size / 2 + 1; }

  // Rejects hop > window, fft_size < window, and any window/hop pair whose
  // analysis*synthesis product does not overlap-add to a constant.
  void validate() const;

  bool operator==(const StftParams&) const = default;
};

// Periodic window used for both analysis and synthesis.
std::vector<double> make_window(WindowKind kind, int length);

struct Spectrogram {
  ComplexMatrix bins;  // frames x (fft_size / 2 + 1)
  StftParams params;
  int sample_rate = 0;
  std::size_t original_length = 0;

  Eigen::Index frames() const noexcept { return bins.rows(); }
  RealMatrix magnitude() const { return bins.cwiseAbs(); }
};

// Frame f covers samples [f*hop - (window - hop), f*hop + hop) of the input, so
// every input sample sees full window overlap.
Spectrogram stft(const AudioClip& clip, const StftParams& params);
AudioClip istft(const Spectrogram& spec);

std::size_t frame_count(std::size_t length, const StftParams& params);

// Complex bins scaled by a real mask in [0, 1]; phase is untouched.
Spectrogram apply_mask(const Spectrogram& spec, const RealMatrix& mask);

}  // namespace bespoke
