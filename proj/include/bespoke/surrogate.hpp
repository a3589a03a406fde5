#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bespoke/augment.hpp"
#include "bespoke/score.hpp"
#include "bespoke/synth.hpp"

namespace bespoke {

// Renders the transcribed target with training patch `index`, time-scaled by
// the recipe's factor.
TargetRenderFn make_target_renderer(std::vector<NoteEvent> target, std::vector<Patch> patches, int sample_rate);

// Accompaniment rendered `variants` times; variant v plays every track with
// patch (v mod n) of its instrument, so variants stop at the largest patch
// count in use. `instruments` maps accompaniment track index -> bank key.
BackgroundSource synthesize_background(const std::map<std::size_t, std::vector<NoteEvent>>& tracks,
                                       const PatchBank& bank, const std::map<std::size_t, std::string>& instruments,
                                       int variants, int sample_rate);

// Independent seeds for the example stream, weight init and dropout, all
// derived from one global seed.
struct SeedPlan {
  std::uint64_t global = 0;
  std::uint64_t stream = 0;
  std::uint64_t init = 0;
  std::uint64_t train = 0;
};
SeedPlan plan_seeds(std::uint64_t global, std::uint64_t salt = 0);

}  // namespace bespoke
