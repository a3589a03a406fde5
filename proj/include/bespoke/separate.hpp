#pragma once

#include "bespoke/audio.hpp"
#include "bespoke/model.hpp"
#include "bespoke/stft.hpp"

namespace bespoke {

struct ChunkSpec {
  double length = 30.0;   // seconds
  double overlap = 15.0;  // seconds
};

struct SeparationResult {
  AudioClip estimate;
  AudioClip residual;  // mixture - estimate
  RealMatrix mask;
  double mean_mask = 0.0;
  double masked_energy_fraction = 0.0;  // |estimate|^2 / |mixture|^2
};

// Runs the network over overlapping chunks of the mixture spectrogram and
// cross-fades the chunk masks with complementary raised-cosine ramps.
RealMatrix infer_mask(const Spectrogram& mix, const MaskNet& net, const ChunkSpec& chunk);

SeparationResult separate(const AudioClip& mixture, const MaskNet& net, const StftParams& stft_params,
                          const ChunkSpec& chunk = {});

// Masking with an externally supplied mask, e.g. the oracle tPSA mask.
SeparationResult separate_with_mask(const AudioClip& mixture, const RealMatrix& mask,
                                    const StftParams& stft_params);

inline constexpr double kSiSdrCap = 60.0;

// Scale-invariant SDR in dB, capped at +60 when the error vanishes.
double si_sdr(const AudioClip& estimate, const AudioClip& reference);

}  // namespace bespoke
