#pragma once

#include "bespoke/audio.hpp"

namespace bespoke {

// Kaiser-windowed sinc interpolation (32 zero crossings per side, beta 9,
// cutoff at 0.95 of the lower Nyquist frequency). Passband ripple stays below
// about 0.1 dB up to 0.9 of the lower Nyquist frequency; stopband rejection is
// roughly 80 dB.
AudioClip resample(const AudioClip& clip, int target_rate);

}  // namespace bespoke
