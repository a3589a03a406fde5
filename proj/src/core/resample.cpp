#include "bespoke/resample.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "bespoke/error.hpp"

namespace bespoke {
namespace {

constexpr int kZeroCrossings = 32;
constexpr double kBeta = 9.0;
constexpr double kRolloff = 0.95;

double kaiser(double x) {
  // x in [-1, 1]
  const double arg = kBeta * std::sqrt(std::max(0.0, 1.0 - x * x));
  return std::cyl_bessel_i(0.0, arg) / std::cyl_bessel_i(0.0, kBeta);
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

AudioClip resample(const AudioClip& clip, int target_rate) {
  require(target_rate > 0, "resample: target rate must be positive");
  require(clip.sample_rate > 0, "resample: source rate must be positive");
  if (target_rate == clip.sample_rate) return clip;

  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  const double cutoff = kRolloff * std::min(1.0, ratio);  // in input-rate Nyquist units
  const double half_width = kZeroCrossings / cutoff;      // in input samples
  const auto out_len = static_cast<std::size_t>(std::llround(clip.size() * ratio));
  const auto n_in = static_cast<std::ptrdiff_t>(clip.size());

  // Kernel tabulated on a fine grid over |d| <= half_width, linearly interpolated.
  constexpr int kTableDensity = 512;
  const auto table_len = static_cast<std::size_t>(std::ceil(half_width * kTableDensity)) + 2;
  std::vector<double> table(table_len);
  for (std::size_t i = 0; i < table_len; ++i) {
    const double d = static_cast<double>(i) / kTableDensity;
    table[i] = d >= half_width ? 0.0 : cutoff * sinc(cutoff * d) * kaiser(d / half_width);
  }
  const auto kernel = [&](double d) {
    const double pos = std::abs(d) * kTableDensity;
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= table_len) return 0.0;
    const double frac = pos - static_cast<double>(i);
    return table[i] + frac * (table[i + 1] - table[i]);
  };

  AudioClip out = AudioClip::zeros(out_len, target_rate);
  for (std::size_t n = 0; n < out_len; ++n) {
    const double t = static_cast<double>(n) / ratio;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(t - half_width)));
    const auto hi = std::min<std::ptrdiff_t>(n_in - 1, static_cast<std::ptrdiff_t>(std::floor(t + half_width)));
    double acc = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
      const double d = t - static_cast<double>(k);
      acc += clip.samples[static_cast<std::size_t>(k)] * kernel(d);
    }
    out.samples[n] = acc;
  }
  return out;
}

}  // namespace bespoke
