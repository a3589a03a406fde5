#include "bespoke/stft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>

#include "bespoke/error.hpp"

namespace bespoke {
namespace {

// FFTW's planner is not thread-safe; executing an existing plan on fresh
// arrays is. Plans are created once per size and kept for the process.
struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [n, p] : plans_) {
      fftw_destroy_plan(p.forward);
      fftw_destroy_plan(p.inverse);
    }
  }

  PlanPair get(int n) {
    std::lock_guard lock(mutex_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    double* real = fftw_alloc_real(n);
    fftw_complex* cplx = fftw_alloc_complex(n / 2 + 1);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    PlanPair p{fftw_plan_dft_r2c_1d(n, real, cplx, flags), fftw_plan_dft_c2r_1d(n, cplx, real, flags)};
    fftw_free(real);
    fftw_free(cplx);
    plans_.emplace(n, p);
    return p;
  }

 private:
  std::mutex mutex_;
  std::map<int, PlanPair> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

std::size_t front_padding(const StftParams& p) {
  return static_cast<std::size_t>(p.window_length - p.hop_length);
}

}  // namespace

std::vector<double> make_window(WindowKind kind, int length) {
  std::vector<double> w(static_cast<std::size_t>(length), 1.0);
  if (kind == WindowKind::rectangular) return w;
  for (int n = 0; n < length; ++n) {
    const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / length);
    w[static_cast<std::size_t>(n)] = kind == WindowKind::hann ? hann : std::sqrt(hann);
  }
  return w;
}

void StftParams::validate() const {
  require(window_length > 0, "stft: window_length must be positive");
  require(hop_length > 0, "stft: hop_length must be positive");
  require(hop_length <= window_length, "stft: hop_length must not exceed window_length");
  require(fft_size >= window_length, "stft: fft_size must be at least window_length");

  const auto w = make_window(window, window_length);
  std::vector<double> ola(static_cast<std::size_t>(hop_length), 0.0);
  for (int n = 0; n < window_length; ++n) ola[static_cast<std::size_t>(n % hop_length)] += w[n] * w[n];
  const auto [lo, hi] = std::minmax_element(ola.begin(), ola.end());
  if (*lo <= 0.0 || (*hi - *lo) > 1e-9 * *hi) {
    fail(Errc::invalid_argument, "stft: window/hop pair violates constant overlap-add (hop " +
                                     std::to_string(hop_length) + ", window " +
                                     std::to_string(window_length) + ")");
  }
}

std::size_t frame_count(std::size_t length, const StftParams& p) {
  return (length - 1 + front_padding(p)) / static_cast<std::size_t>(p.hop_length) + 1;
}

Spectrogram stft(const AudioClip& clip, const StftParams& params) {
  params.validate();
  require(!clip.empty(), "stft: clip must contain at least one sample");

  const std::size_t frames = frame_count(clip.size(), params);
  const int bins = params.bins();
  const auto window = make_window(params.window, params.window_length);
  const auto pad = static_cast<std::ptrdiff_t>(front_padding(params));
  const auto plan = plan_cache().get(params.fft_size).forward;

  Spectrogram spec;
  spec.params = params;
  spec.sample_rate = clip.sample_rate;
  spec.original_length = clip.size();
  spec.bins.resize(static_cast<Eigen::Index>(frames), bins);

  std::vector<double> buffer(static_cast<std::size_t>(params.fft_size));
  const auto n = static_cast<std::ptrdiff_t>(clip.size());
  for (std::size_t f = 0; f < frames; ++f) {
    std::fill(buffer.begin(), buffer.end(), 0.0);
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(f) * params.hop_length - pad;
    for (int k = 0; k < params.window_length; ++k) {
      const std::ptrdiff_t i = start + k;
      if (i >= 0 && i < n) buffer[k] = clip.samples[static_cast<std::size_t>(i)] * window[k];
    }
    auto* out = reinterpret_cast<fftw_complex*>(spec.bins.row(static_cast<Eigen::Index>(f)).data());
    fftw_execute_dft_r2c(plan, buffer.data(), out);
  }
  return spec;
}

AudioClip istft(const Spectrogram& spec) {
  const StftParams& params = spec.params;
  params.validate();
  require(spec.sample_rate > 0, "istft: sample rate must be positive");
  require(spec.original_length > 0, "istft: original_length must be positive");
  require(spec.bins.cols() == params.bins(), "istft: bin count does not match fft_size");
  require(static_cast<std::size_t>(spec.bins.rows()) == frame_count(spec.original_length, params),
          "istft: frame count does not match original_length");

  const auto window = make_window(params.window, params.window_length);
  const auto pad = static_cast<std::ptrdiff_t>(front_padding(params));
  const auto plan = plan_cache().get(params.fft_size).inverse;
  const auto n = static_cast<std::ptrdiff_t>(spec.original_length);

  std::vector<double> acc(spec.original_length, 0.0);
  std::vector<double> norm(spec.original_length, 0.0);
  std::vector<double> buffer(static_cast<std::size_t>(params.fft_size));
  std::vector<std::complex<double>> row(static_cast<std::size_t>(params.bins()));
  for (Eigen::Index f = 0; f < spec.bins.rows(); ++f) {
    // c2r overwrites its input.
    for (Eigen::Index b = 0; b < spec.bins.cols(); ++b) row[static_cast<std::size_t>(b)] = spec.bins(f, b);
    fftw_execute_dft_c2r(plan, reinterpret_cast<fftw_complex*>(row.data()), buffer.data());
    const std::ptrdiff_t start = f * params.hop_length - pad;
    for (int k = 0; k < params.window_length; ++k) {
      const std::ptrdiff_t i = start + k;
      if (i < 0 || i >= n) continue;
      acc[static_cast<std::size_t>(i)] += buffer[k] / params.fft_size * window[k];
      norm[static_cast<std::size_t>(i)] += window[k] * window[k];
    }
  }

  AudioClip out = AudioClip::zeros(spec.original_length, spec.sample_rate);
  for (std::size_t i = 0; i < acc.size(); ++i) {
    out.samples[i] = norm[i] > 1e-10 ? acc[i] / norm[i] : 0.0;
  }
  return out;
}

Spectrogram apply_mask(const Spectrogram& spec, const RealMatrix& mask) {
  require(mask.rows() == spec.bins.rows() && mask.cols() == spec.bins.cols(),
          "apply_mask: mask shape " + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) +
              " does not match spectrogram " + std::to_string(spec.bins.rows()) + "x" +
              std::to_string(spec.bins.cols()));
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    const double m = mask.data()[i];
    if (!(m >= 0.0 && m <= 1.0)) {
      fail(Errc::invalid_argument, "apply_mask: mask entry " + std::to_string(m) + " outside [0, 1]");
    }
  }
  Spectrogram out = spec;
  out.bins = spec.bins.cwiseProduct(mask.cast<std::complex<double>>());
  return out;
}

}  // namespace bespoke
