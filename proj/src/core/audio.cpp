#include "bespoke/audio.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bespoke/error.hpp"

namespace bespoke {

void validate(const AudioClip& clip) {
  require(clip.sample_rate > 0, "sample rate must be positive");
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    if (!std::isfinite(clip.samples[i])) {
      fail(Errc::invalid_argument, "non-finite sample at index " + std::to_string(i));
    }
  }
}

double db_to_gain(double db) {
  require(std::isfinite(db), "db_to_gain: decibel value must be finite");
  return std::pow(10.0, db / 20.0);
}

double gain_to_db(double gain) {
  require(gain > 0.0 && std::isfinite(gain), "gain_to_db: gain must be positive");
  return 20.0 * std::log10(gain);
}

double peak(const AudioClip& clip) noexcept {
  double p = 0.0;
  for (double v : clip.samples) p = std::max(p, std::abs(v));
  return p;
}

double energy(std::span<const double> x) noexcept {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

Normalized peak_normalize(const AudioClip& clip) {
  require(!clip.empty(), "peak_normalize: empty clip");
  const double p = peak(clip);
  if (p == 0.0) {
    fail(Errc::degenerate_silence, "peak_normalize: clip is silent");
  }
  const double scale = 1.0 / p;
  Normalized out{scaled(clip, scale), scale};
  // 1/p * p can land one ulp off 1.0; pin the peak sample exactly.
  for (double& v : out.clip.samples) {
    if (std::abs(v) > 1.0) v = std::copysign(1.0, v);
  }
  return out;
}

AudioClip scaled(const AudioClip& clip, double gain) {
  AudioClip out = clip;
  for (double& v : out.samples) v *= gain;
  return out;
}

AudioClip crop(const AudioClip& clip, std::size_t offset, std::size_t length) {
  AudioClip out = AudioClip::zeros(length, clip.sample_rate);
  if (offset < clip.size()) {
    const std::size_t n = std::min(length, clip.size() - offset);
    std::copy_n(clip.samples.begin() + static_cast<std::ptrdiff_t>(offset), n, out.samples.begin());
  }
  return out;
}

AudioClip add(const AudioClip& a, const AudioClip& b) {
  require(a.sample_rate == b.sample_rate, "add: sample rates differ");
  AudioClip out = AudioClip::zeros(std::max(a.size(), b.size()), a.sample_rate);
  for (std::size_t i = 0; i < a.size(); ++i) out.samples[i] += a.samples[i];
  for (std::size_t i = 0; i < b.size(); ++i) out.samples[i] += b.samples[i];
  return out;
}

std::size_t seconds_to_samples(double seconds, int sample_rate) {
  require(seconds >= 0.0 && std::isfinite(seconds), "negative or non-finite duration");
  return static_cast<std::size_t>(std::llround(seconds * sample_rate));
}

}  // namespace bespoke
