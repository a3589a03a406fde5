#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bespoke/config.hpp"
#include "bespoke/score.hpp"
#include "bespoke/surrogate.hpp"
#include "bespoke/synth.hpp"

namespace bespoke {

enum class PartRole { melody, bass, pad, arpeggio };

struct PartSpec {
  std::string name;
  PartRole role = PartRole::melody;
  int low_pitch = 60;
  int high_pitch = 84;
  std::vector<Patch> train_patches;  // used to render surrogate data
  Patch test_patch;                  // renders the ground-truth stem
  double level_db = 0.0;             // stem gain in the test mixture
};

struct SongSpec {
  std::string name;
  std::uint64_t seed = 0;
  double duration = 8.0;  // seconds
  double tempo_bpm = 120.0;
  PartSpec target;
  std::vector<PartSpec> accompaniment;
  BackgroundStrategy background = BackgroundStrategy::synthesized_accompaniment;
  // The transcription handed to training is the true arrangement stretched
  // and shifted by these amounts, so it is deliberately not aligned.
  double transcription_stretch = 1.0;
  double transcription_shift = 0.0;     // seconds
  double target_to_accompaniment_db = 0.0;
};

struct SyntheticSong {
  Score arrangement;    // ground truth; track 0 is the target
  Score transcription;  // what training sees
  AudioClip target;     // test-time stems (test patches)
  AudioClip accompaniment;
  AudioClip mixture;
};

// Diatonic random arrangement: a chord progression drives bass, pad and
// arpeggio parts; the melody walks the scale in its register.
Score compose(const SongSpec& spec);
SyntheticSong generate_song(const SongSpec& spec, int sample_rate);

struct BenchConfig {
  int sample_rate = 16000;
  StftParams stft;
  MaskNetConfig model;
  TrainConfig train;
  AugmentRanges ranges;
  double excerpt = 8.0;
  CompressorParams compressor;
  ChunkSpec chunk;
  int background_variants = 2;
  std::uint64_t seed = 0;
  std::vector<SongSpec> songs;
};

BenchConfig parse_bench_config(const std::string& text, const ConfigOptions& options = {});
BenchConfig load_bench_config(const std::filesystem::path& path, const ConfigOptions& options = {});
Json to_json(const BenchConfig& config);

struct EvalReport {
  std::string song;
  bool ok = false;
  std::string error;  // set when !ok
  double si_sdr = 0.0;
  double baseline = 0.0;
  double improvement = 0.0;
  double oracle = 0.0;  // tPSA oracle mask from the true stems
  double first_loss = 0.0;
  double final_loss = 0.0;
  double estimate_plus_residual_error = 0.0;  // relative L2 vs the mixture
  std::uint64_t song_seed = 0;
  SeedPlan seeds;
  std::int64_t steps = 0;
  std::string config_hash;
  std::string stems_sha256;  // estimate WAV bytes
  double wall_time_s = 0.0;
};

Json to_json(const EvalReport& report);
// {"reports": [...]} with stable key order.
std::string reports_json(const std::vector<EvalReport>& reports);

struct BenchOptions {
  std::filesystem::path stems_dir;  // empty: keep nothing on disk
  std::optional<std::int64_t> steps;
  std::function<void(const std::string& song, const TrainRecord&)> log;
};

EvalReport evaluate_song(const BenchConfig& config, std::size_t song_index, const BenchOptions& options = {});

// One report per song; a failing song is recorded and the run moves on.
std::vector<EvalReport> run_benchmark(const BenchConfig& config, const BenchOptions& options = {});

}  // namespace bespoke
