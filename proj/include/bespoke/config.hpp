#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>

#include <json.hpp>

#include "bespoke/augment.hpp"
#include "bespoke/model.hpp"
#include "bespoke/separate.hpp"
#include "bespoke/stft.hpp"
#include "bespoke/synth.hpp"

namespace bespoke {

using Json = nlohmann::json;

// Walks one JSON object and rejects any key that was never read.
class ObjectReader {
 public:
  ObjectReader(const Json& value, std::string where);

  bool has(const std::string& key) const;
  const Json& at(const std::string& key);
  const Json* find(const std::string& key);

  template <typename T>
  T get(const std::string& key, const T& fallback) {
    const Json* v = find(key);
    return v ? convert<T>(*v, key) : fallback;
  }
  template <typename T>
  T required(const std::string& key) {
    return convert<T>(at(key), key);
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }
  void finish() const;

 private:
  template <typename T>
  T convert(const Json& v, const std::string& key) const;

  const Json& value_;
  std::string where_;
  std::set<std::string> seen_;
};

// Schema limits for the augmentation ranges. The defaults are the published
// recipe; widening requires an explicit opt-in.
struct RangeLimits {
  bool allow_wide = false;
  void check(const AugmentRanges& ranges, const std::string& where) const;
};

StftParams stft_from_json(const Json& j, const std::string& where);
Json to_json(const StftParams& p);
Patch patch_from_json(const Json& j, const std::string& where);
Json to_json(const Patch& p);
PatchBank patch_bank_from_json(const Json& j, const std::string& where);
MaskNetConfig model_from_json(const Json& j, const std::string& where, int input_bins);
Json to_json(const MaskNetConfig& c);
TrainConfig train_from_json(const Json& j, const std::string& where);
Json to_json(const TrainConfig& c);
AugmentRanges ranges_from_json(const Json& j, const std::string& where);
Json to_json(const AugmentRanges& r);
CompressorParams compressor_from_json(const Json& j, const std::string& where);
Json to_json(const CompressorParams& c);
ChunkSpec chunk_from_json(const Json& j, const std::string& where);
Json to_json(const ChunkSpec& c);
const char* to_string(BackgroundStrategy s);
BackgroundStrategy strategy_from_string(const std::string& s, const std::string& where);

struct ConfigOptions {
  bool allow_wide_ranges = false;
  bool check_paths = true;
};

struct ProjectConfig {
  int sample_rate = 16000;
  StftParams stft;
  PatchBank patches;

  std::filesystem::path midi;
  std::string target;             // track name or index
  std::string target_instrument;  // patch bank key used for the target
  BackgroundStrategy background = BackgroundStrategy::original_mixture;
  std::filesystem::path mixture;  // the recording to separate
  // accompaniment track (name or index) -> patch bank key; only needed for
  // the synthesized-accompaniment strategy
  std::map<std::string, std::string> accompaniment;
  int background_variants = 2;

  AugmentRanges ranges;
  double excerpt = 8.0;  // seconds
  CompressorParams compressor;
  MaskNetConfig model;
  TrainConfig train;
  ChunkSpec chunk;

  std::filesystem::path output_dir;  // empty: use the environment or ./experiments
  std::uint64_t seed = 0;
};

// Parses and validates. Relative paths resolve against `base_dir`.
ProjectConfig parse_project_config(const std::string& text, const std::filesystem::path& base_dir,
                                   const ConfigOptions& options = {});
ProjectConfig load_project_config(const std::filesystem::path& path, const ConfigOptions& options = {});
void validate(const ProjectConfig& config, const ConfigOptions& options);

// Canonical JSON of the resolved configuration (paths absolute).
Json to_json(const ProjectConfig& config);

}  // namespace bespoke
