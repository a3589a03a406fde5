#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace bespoke {

// Mono signal, nominal full scale +-1.0. DSP paths stay in double precision.
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 16000;

  AudioClip() = default;
  AudioClip(std::vector<double> s, int rate) : samples(std::move(s)), sample_rate(rate) {}
  static AudioClip zeros(std::size_t length, int rate) {
    return AudioClip(std::vector<double>(length, 0.0), rate);
  }

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  double duration() const noexcept {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Throws invalid_argument on a non-positive rate or any non-finite sample.
void validate(const AudioClip& clip);

double db_to_gain(double db);
double gain_to_db(double gain);

double peak(const AudioClip& clip) noexcept;
double energy(std::span<const double> x) noexcept;

struct Normalized {
  AudioClip clip;
  double scale = 1.0;
};

// Scales so max |x| == 1. All-zero input is degenerate_silence.
Normalized peak_normalize(const AudioClip& clip);

AudioClip scaled(const AudioClip& clip, double gain);

// Excerpt starting at `offset` samples; reads past the end are zero.
AudioClip crop(const AudioClip& clip, std::size_t offset, std::size_t length);

// Element-wise sum; the shorter operand is zero-extended.
AudioClip add(const AudioClip& a, const AudioClip& b);

std::size_t seconds_to_samples(double seconds, int sample_rate);

}  // namespace bespoke
