#include "bespoke/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "bespoke/error.hpp"
#include "bespoke/hash.hpp"
#include "bespoke/wav.hpp"

namespace bespoke {
namespace {

constexpr int kMaxRedraws = 16;

double clip_length_seconds(const AudioClip& clip) { return clip.duration(); }

}  // namespace

void AugmentRanges::validate() const {
  require(std::isfinite(gain_min_db) && std::isfinite(gain_max_db) && gain_min_db <= gain_max_db,
          "augment: gain range must be finite with min <= max");
  require(!ratios.empty(), "augment: compression ratio set is empty");
  for (double r : ratios) require(r >= 1.0 && std::isfinite(r), "augment: compression ratios must be >= 1");
  require(time_scale_min > 0 && time_scale_min <= time_scale_max, "augment: bad time-scale range");
}

void CompressorParams::validate() const {
  require(ratio >= 1.0, "compressor: ratio must be >= 1");
  require(attack > 0 && release > 0, "compressor: attack and release must be positive");
  require(std::isfinite(threshold_db) && std::isfinite(makeup_db), "compressor: threshold and makeup must be finite");
}

void BackgroundSource::validate() const {
  require(!payload.empty(), "background source payload is empty");
  for (const AudioClip& a : alternates) {
    require(!a.empty(), "background alternate is empty");
    require(a.sample_rate == payload.sample_rate, "background alternates must share the payload's sample rate");
  }
}

const AudioClip& BackgroundSource::variant(std::size_t i) const {
  require(i < variants(), "background variant out of range");
  return i == 0 ? payload : alternates[i - 1];
}

MixRecipe sample_recipe(std::mt19937_64& rng, double target_len, double background_len, double excerpt_len,
                        const RecipeSpace& space) {
  space.ranges.validate();
  require(excerpt_len > 0, "sample_recipe: excerpt length must be positive");
  require(excerpt_len <= target_len && excerpt_len <= background_len,
          "sample_recipe: excerpt of " + std::to_string(excerpt_len) + " s is longer than a source (target " +
              std::to_string(target_len) + " s, background " + std::to_string(background_len) + " s)");
  require(space.target_patches >= 1 && space.background_variants >= 1, "sample_recipe: empty patch space");

  const AugmentRanges& r = space.ranges;
  std::uniform_real_distribution<double> gain(r.gain_min_db, r.gain_max_db);
  std::uniform_real_distribution<double> stretch(r.time_scale_min, r.time_scale_max);
  std::uniform_int_distribution<std::size_t> ratio_index(0, r.ratios.size() - 1);
  std::uniform_int_distribution<std::size_t> patch(0, space.target_patches - 1);
  std::uniform_int_distribution<std::size_t> variant(0, space.background_variants - 1);

  MixRecipe recipe;
  recipe.time_scale_factor = stretch(rng);
  recipe.gain_target_db = gain(rng);
  recipe.gain_background_db = gain(rng);
  recipe.compression_ratio = r.ratios[ratio_index(rng)];
  recipe.target_patch = patch(rng);
  recipe.background_variant = variant(rng);

  const double target_slack = std::max(0.0, target_len * recipe.time_scale_factor - excerpt_len);
  const double background_slack = background_len - excerpt_len;
  recipe.target_crop = {std::uniform_real_distribution<double>(0.0, target_slack)(rng), excerpt_len};
  recipe.background_crop = {std::uniform_real_distribution<double>(0.0, background_slack)(rng), excerpt_len};
  recipe.seed = rng();
  return recipe;
}

AudioClip compress(const AudioClip& clip, const CompressorParams& params) {
  params.validate();
  require(clip.sample_rate > 0, "compress: sample rate must be positive");
  const double attack = std::exp(-1.0 / (params.attack * clip.sample_rate));
  const double release = std::exp(-1.0 / (params.release * clip.sample_rate));
  const double slope = 1.0 - 1.0 / params.ratio;

  AudioClip out = clip;
  double held = 0.0;
  double env = 0.0;
  for (double& x : out.samples) {
    const double level = std::abs(x);
    held = std::max(level, release * held + (1.0 - release) * level);
    env = attack * env + (1.0 - attack) * held;
    const double env_db = 20.0 * std::log10(std::max(env, 1e-12));
    const double gain_db = std::min(0.0, (params.threshold_db - env_db) * slope);
    x *= std::pow(10.0, (gain_db + params.makeup_db) / 20.0);
  }
  return out;
}

TrainingExample make_training_example(const AudioClip& target, const BackgroundSource& background,
                                      const MixRecipe& recipe, const CompressorParams& comp) {
  const AudioClip& bg = background.variant(recipe.background_variant);
  require(target.sample_rate == bg.sample_rate, "make_training_example: target and background sample rates differ");
  require(recipe.target_crop.length == recipe.background_crop.length,
          "make_training_example: crops must have equal length");
  const int rate = target.sample_rate;
  const std::size_t n = seconds_to_samples(recipe.target_crop.length, rate);
  require(n > 0, "make_training_example: empty excerpt");

  const AudioClip t = scaled(crop(target, seconds_to_samples(recipe.target_crop.offset, rate), n),
                             db_to_gain(recipe.gain_target_db));
  const AudioClip b = scaled(crop(bg, seconds_to_samples(recipe.background_crop.offset, rate), n),
                             db_to_gain(recipe.gain_background_db));
  CompressorParams mix_comp = comp;
  mix_comp.ratio = recipe.compression_ratio;
  Normalized mix = peak_normalize(compress(add(t, b), mix_comp));
  return {std::move(mix.clip), scaled(t, mix.scale)};
}

ExampleStream::ExampleStream(StreamSettings settings, TargetRenderFn render_target, BackgroundSource background)
    : settings_(std::move(settings)), render_target_(std::move(render_target)), background_(std::move(background)) {
  require(settings_.count >= 1, "example stream: count must be at least 1");
  require(static_cast<bool>(render_target_), "example stream: missing target renderer");
  require(settings_.nominal_target_len > 0, "example stream: nominal target length must be positive");
  background_.validate();
  settings_.space.ranges.validate();
  settings_.compressor.validate();
  settings_.space.background_variants = background_.variants();
}

std::pair<MixRecipe, TrainingExample> ExampleStream::generate(std::size_t index) const {
  require(index < settings_.count, "example stream: index " + std::to_string(index) + " past end of stream");
  double background_len = background_.payload.duration();
  for (const AudioClip& a : background_.alternates) background_len = std::min(background_len, clip_length_seconds(a));

  auto rng = derive_rng(settings_.seed, index);
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    MixRecipe recipe =
        sample_recipe(rng, settings_.nominal_target_len, background_len, settings_.excerpt_len, settings_.space);
    const AudioClip target = render_target_(recipe.target_patch, recipe.time_scale_factor);
    try {
      return {recipe, make_training_example(target, background_, recipe, settings_.compressor)};
    } catch (const Error& e) {
      if (e.code() != Errc::degenerate_silence) throw;
    }
  }
  fail(Errc::degenerate_silence, "example stream: element " + std::to_string(index) + " stayed silent after " +
                                     std::to_string(kMaxRedraws) + " recipe draws");
}

TrainingExample ExampleStream::at(std::size_t index) const { return generate(index).second; }

MixRecipe ExampleStream::recipe(std::size_t index) const { return generate(index).first; }

std::string ExampleStream::describe(std::size_t index) const {
  std::ostringstream os;
  os << "example " << index << " (stream seed " << settings_.seed << ")";
  return os.str();
}

std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

void materialize(const ExampleStream& stream, const std::filesystem::path& dir, std::size_t n) {
  require(n <= stream.size(), "materialize: requested more examples than the stream holds");
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.jsonl", std::ios::trunc);
  if (!manifest) fail(Errc::io, "cannot write manifest in " + dir.string());
  for (std::size_t i = 0; i < n; ++i) {
    auto [recipe, example] = stream.generate(i);
    std::ostringstream stem;
    stem << std::setw(6) << std::setfill('0') << i;
    const auto mix_path = dir / ("mix_" + stem.str() + ".wav");
    const auto ref_path = dir / ("reference_" + stem.str() + ".wav");
    write_wav(mix_path, example.mix);
    write_wav(ref_path, example.reference);
    nlohmann::json line = {
        {"index", i},
        {"recipe",
         {{"gain_target_db", recipe.gain_target_db},
          {"gain_background_db", recipe.gain_background_db},
          {"compression_ratio", recipe.compression_ratio},
          {"target_crop", {{"offset_s", recipe.target_crop.offset}, {"length_s", recipe.target_crop.length}}},
          {"background_crop",
           {{"offset_s", recipe.background_crop.offset}, {"length_s", recipe.background_crop.length}}},
          {"time_scale_factor", recipe.time_scale_factor},
          {"seed", recipe.seed},
          {"target_patch", recipe.target_patch},
          {"background_variant", recipe.background_variant}}},
        {"mix", {{"path", mix_path.filename().string()}, {"sha256", sha256_file(mix_path)}}},
        {"reference", {{"path", ref_path.filename().string()}, {"sha256", sha256_file(ref_path)}}},
    };
    manifest << line.dump() << '\n';
  }
}

}  // namespace bespoke
