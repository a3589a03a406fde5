#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "bespoke/audio.hpp"

namespace bespoke {

struct Crop {
  double offset = 0.0;  // seconds
  double length = 0.0;  // seconds

  bool operator==(const Crop&) const = default;
};

struct MixRecipe {
  double gain_target_db = 0.0;
  double gain_background_db = 0.0;
  double compression_ratio = 1.0;
  Crop target_crop;
  Crop background_crop;
  double time_scale_factor = 1.0;
  std::uint64_t seed = 0;
  std::size_t target_patch = 0;
  std::size_t background_variant = 0;

  bool operator==(const MixRecipe&) const = default;
};

// Ranges the recipe sampler draws from. Defaults are the published recipe.
struct AugmentRanges {
  double gain_min_db = -12.0;
  double gain_max_db = 6.0;
  std::vector<double> ratios{2, 4, 8, 12, 16, 20};
  double time_scale_min = 0.9;
  double time_scale_max = 1.1;

  void validate() const;
};

struct RecipeSpace {
  AugmentRanges ranges;
  std::size_t target_patches = 1;
  std::size_t background_variants = 1;
};

struct CompressorParams {
  double threshold_db = -20.0;  // dBFS
  double ratio = 4.0;
  double attack = 0.005;   // seconds
  double release = 0.100;  // seconds
  double makeup_db = 0.0;

  void validate() const;
};

enum class BackgroundStrategy { original_mixture, synthesized_accompaniment };

struct BackgroundSource {
  BackgroundStrategy strategy = BackgroundStrategy::original_mixture;
  AudioClip payload;
  // Extra renders of the same accompaniment with other patch choices; the
  // recipe's background_variant picks payload (0) or alternates[i - 1].
  std::vector<AudioClip> alternates;

  void validate() const;
  std::size_t variants() const noexcept { return 1 + alternates.size(); }
  const AudioClip& variant(std::size_t i) const;
};

// Lengths in seconds. Offsets are drawn so that crops stay inside each source
// (the target length is taken after applying the sampled time-scale factor).
MixRecipe sample_recipe(std::mt19937_64& rng, double target_len, double background_len, double excerpt_len,
                        const RecipeSpace& space = {});

// Feed-forward peak compressor. The detector holds instantaneous peaks and
// decays them with the release constant, then smooths the held peak with the
// attack constant; gain is computed in dB from the static curve.
AudioClip compress(const AudioClip& clip, const CompressorParams& params);

struct TrainingExample {
  AudioClip mix;
  AudioClip reference;
};

// crop -> gains -> sum -> compress (ratio from the recipe) -> peak normalize;
// the reference is the gain-scaled target crop times the same normalization
// constant, so it never passes through the compressor.
TrainingExample make_training_example(const AudioClip& target, const BackgroundSource& background,
                                      const MixRecipe& recipe, const CompressorParams& comp);

// (patch index, time-scale factor) -> rendered target
using TargetRenderFn = std::function<AudioClip(std::size_t, double)>;

struct StreamSettings {
  std::uint64_t seed = 0;
  std::size_t count = 1;
  double excerpt_len = 8.0;  // seconds
  double nominal_target_len = 0.0;  // seconds, render length at time scale 1
  RecipeSpace space;
  CompressorParams compressor;
};

class ExampleSource {
 public:
  virtual ~ExampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual TrainingExample at(std::size_t index) const = 0;
  // Short description used in diagnostics, e.g. the recipe seed.
  virtual std::string describe(std::size_t index) const = 0;
};

// Random-access stream of surrogate examples; element i depends only on
// (seed, i). Recipes that land on silence in both sources are redrawn from the
// same per-element generator.
class ExampleStream : public ExampleSource {
 public:
  ExampleStream(StreamSettings settings, TargetRenderFn render_target, BackgroundSource background);

  std::size_t size() const override { return settings_.count; }
  TrainingExample at(std::size_t index) const override;
  std::string describe(std::size_t index) const override;
  MixRecipe recipe(std::size_t index) const;

  const StreamSettings& settings() const noexcept { return settings_; }

  friend void materialize(const ExampleStream& stream, const std::filesystem::path& dir, std::size_t n);

 private:
  std::pair<MixRecipe, TrainingExample> generate(std::size_t index) const;

  StreamSettings settings_;
  TargetRenderFn render_target_;
  BackgroundSource background_;
};

// Writes mix/reference WAV pairs plus manifest.jsonl (index, recipe fields,
// paths, SHA-256 of each file).
void materialize(const ExampleStream& stream, const std::filesystem::path& dir, std::size_t n);

// Seeds a generator from (seed, index) with std::seed_seq.
std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t index);

}  // namespace bespoke
