#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "bespoke/audio.hpp"
#include "smf.hpp"
#include "temp_dir.hpp"

namespace testing_support {

inline bespoke::AudioClip random_clip(std::mt19937_64& rng, std::size_t n, int rate = 16000, double amp = 0.5) {
  std::uniform_real_distribution<double> u(-amp, amp);
  bespoke::AudioClip c = bespoke::AudioClip::zeros(n, rate);
  for (double& x : c.samples) x = u(rng);
  return c;
}

inline bespoke::AudioClip sine(double hz, double seconds, int rate = 16000, double amp = 1.0, double phase = 0.0) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  bespoke::AudioClip c = bespoke::AudioClip::zeros(n, rate);
  for (std::size_t i = 0; i < n; ++i) c.samples[i] = amp * std::sin(2 * M_PI * hz * static_cast<double>(i) / rate + phase);
  return c;
}

inline double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace testing_support
