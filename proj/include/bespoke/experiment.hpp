#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "bespoke/config.hpp"
#include "bespoke/model.hpp"
#include "bespoke/separate.hpp"
#include "bespoke/surrogate.hpp"

namespace bespoke {

inline constexpr const char* kOutputRootEnv = "BESPOKE_OUTPUT_ROOT";

// --out, then the config's output_dir, then $BESPOKE_OUTPUT_ROOT, then
// ./experiments.
std::filesystem::path resolve_output_root(const std::optional<std::filesystem::path>& cli,
                                          const std::filesystem::path& from_config = {});

// Creates root/<prefix>-NNNN with the first free N; never reuses a directory.
std::filesystem::path create_run_dir(const std::filesystem::path& root, const std::string& prefix);

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
  std::optional<std::filesystem::path> output_root;
  bool allow_wide_ranges = false;
};

// One reproducible run on disk:
//   config.json        byte copy of the validated input config
//   run.json           resolved seeds, overrides, source config location
//   checkpoints/       step-NNNNNNN.ckpt
//   logs/train.jsonl   {"step", "wall_time_s", "loss"} per line
//   stems/             estimate.wav, residual.wav (float32)
//   report.json        separation diagnostics
//   manifest.json      SHA-256 of every other file
//   FAILED             written when a stage throws; names the stage
class Experiment {
 public:
  static Experiment create(const std::filesystem::path& config_path, const RunOverrides& overrides = {});
  static Experiment open(const std::filesystem::path& dir);

  const std::filesystem::path& dir() const noexcept { return dir_; }
  const ProjectConfig& config() const noexcept { return config_; }
  const SeedPlan& seeds() const noexcept { return seeds_; }

  std::optional<std::filesystem::path> latest_checkpoint() const;

  // Trains to `steps` (default: the configured count), continuing from the
  // latest checkpoint when one exists.
  void train(std::optional<std::int64_t> steps = {}, const LogSink& progress = {});
  // Applies the latest checkpoint to the configured mixture.
  SeparationResult separate();
  void run(const LogSink& progress = {});

 private:
  Experiment(std::filesystem::path dir, ProjectConfig config, Json run);

  template <typename F>
  auto stage(const char* name, F&& body);
  void write_run_record() const;
  void write_manifest() const;

  std::filesystem::path dir_;
  ProjectConfig config_;
  Json run_;
  SeedPlan seeds_;
};

}  // namespace bespoke
