// Command-line front end; talks to the library only through the C API.
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "bespoke/bespoke.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitInput = 2;

struct Common {
  std::string config;
  std::string exp;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
  std::string out;
  bool allow_wide = false;
  int log_every = 50;
  bool quiet = false;
};

int report(bespoke_status status, const char* command) {
  if (status == BESPOKE_OK) return kExitOk;
  std::fprintf(stderr, "bespoke %s: error (%s): %s\n", command, bespoke_status_name(status), bespoke_last_error());
  return bespoke_status_is_input_error(status) ? kExitInput : kExitRuntime;
}

struct Progress {
  int every = 50;
};

void on_progress(std::int64_t step, double wall, double loss, void* user) {
  const auto* p = static_cast<const Progress*>(user);
  if (p->every > 0 && (step == 1 || step % p->every == 0))
    std::fprintf(stderr, "step %lld  loss %.6g  (%.1f s)\n", static_cast<long long>(step), loss, wall);
}

bespoke_overrides overrides_of(const Common& c) {
  bespoke_overrides o{};
  if (c.seed) {
    o.has_seed = 1;
    o.seed = *c.seed;
  }
  if (c.steps) {
    o.has_steps = 1;
    o.steps = *c.steps;
  }
  o.output_root = c.out.empty() ? nullptr : c.out.c_str();
  o.allow_wide_ranges = c.allow_wide ? 1 : 0;
  return o;
}

// Opens --exp or creates a fresh experiment from --config.
bespoke_status acquire(const Common& c, bespoke_experiment** exp) {
  if (!c.exp.empty()) return bespoke_experiment_open(c.exp.c_str(), exp);
  const bespoke_overrides o = overrides_of(c);
  return bespoke_experiment_create(c.config.c_str(), &o, exp);
}

int cmd_tracks(const std::string& midi) {
  char* json = nullptr;
  const bespoke_status st = bespoke_tracks_json(midi.c_str(), &json);
  if (st != BESPOKE_OK) return report(st, "tracks");
  const auto rows = nlohmann::json::parse(json);
  bespoke_string_free(json);
  std::printf("%-6s %-24s %7s  %s\n", "index", "name", "notes", "pitch range");
  for (const auto& row : rows) {
    std::string range = "-";
    if (!row["min_pitch"].is_null())
      range = std::to_string(row["min_pitch"].get<int>()) + "-" + std::to_string(row["max_pitch"].get<int>());
    std::printf("%-6zu %-24s %7zu  %s\n", row["index"].get<std::size_t>(), row["name"].get<std::string>().c_str(),
                row["notes"].get<std::size_t>(), range.c_str());
  }
  return kExitOk;
}

int cmd_pipeline(const Common& c, const std::string& what) {
  bespoke_experiment* exp = nullptr;
  bespoke_status st = acquire(c, &exp);
  if (st != BESPOKE_OK) return report(st, what.c_str());
  std::fprintf(stderr, "experiment: %s\n", bespoke_experiment_dir(exp));
  Progress progress{c.quiet ? 0 : c.log_every};
  if (what == "run") {
    st = bespoke_experiment_run(exp, on_progress, &progress);
  } else if (what == "train") {
    // --steps on an existing experiment extends its target step count
    const std::int64_t steps = (!c.exp.empty() && c.steps) ? *c.steps : 0;
    st = bespoke_experiment_train(exp, steps, on_progress, &progress);
  } else {
    st = bespoke_experiment_separate(exp);
  }
  if (st == BESPOKE_OK) std::printf("%s\n", bespoke_experiment_dir(exp));
  bespoke_experiment_free(exp);
  return report(st, what.c_str());
}

int cmd_eval(const Common& c) {
  const bespoke_overrides o = overrides_of(c);
  Progress progress{c.quiet ? 0 : c.log_every};
  char* dir = nullptr;
  const bespoke_status st = bespoke_benchmark_run(c.config.c_str(), &o, on_progress, &progress, &dir);
  if (st != BESPOKE_OK) return report(st, "eval");
  std::printf("%s/report.json\n", dir);
  bespoke_string_free(dir);
  return kExitOk;
}

void add_common(CLI::App* cmd, Common& c, bool training) {
  cmd->add_option("--seed", c.seed, "Override the global seed");
  cmd->add_option("--out", c.out, "Output root (default: config output_dir, $BESPOKE_OUTPUT_ROOT, ./experiments)");
  cmd->add_flag("--allow-wide-ranges", c.allow_wide, "Accept augmentation ranges outside the default schema bounds");
  if (training) {
    cmd->add_option("--steps", c.steps, "Override the number of training steps")->check(CLI::PositiveNumber);
    cmd->add_option("--log-every", c.log_every, "Print the loss every N steps (0: never)")->check(CLI::NonNegativeNumber);
    cmd->add_flag("-q,--quiet", c.quiet, "No progress output");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Score-informed bespoke source separation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(bespoke_version()));

  std::string midi;
  auto* tracks = app.add_subcommand("tracks", "List the tracks of a MIDI file");
  tracks->add_option("midi", midi, "Standard MIDI file")->required();

  Common run_opts, train_opts, sep_opts, eval_opts;
  auto* run = app.add_subcommand("run", "Train on surrogate mixtures, then separate the mixture");
  run->add_option("--config", run_opts.config, "Project config (JSON)")->required();
  add_common(run, run_opts, true);

  auto* train = app.add_subcommand("train", "Train, or resume training of an experiment");
  auto* train_cfg = train->add_option("--config", train_opts.config, "Project config; starts a new experiment");
  auto* train_exp = train->add_option("--exp", train_opts.exp, "Existing experiment directory to resume");
  train_cfg->excludes(train_exp);
  add_common(train, train_opts, true);

  auto* sep = app.add_subcommand("separate", "Separate with the latest checkpoint of an experiment");
  auto* sep_cfg = sep->add_option("--config", sep_opts.config, "Project config; starts a new experiment");
  auto* sep_exp = sep->add_option("--exp", sep_opts.exp, "Existing experiment directory");
  sep_cfg->excludes(sep_exp);
  add_common(sep, sep_opts, false);

  auto* eval = app.add_subcommand("eval", "Run the synthetic benchmark");
  eval->add_option("--config", eval_opts.config, "Benchmark config (JSON)")->required();
  add_common(eval, eval_opts, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  if (*tracks) return cmd_tracks(midi);
  if (*run) return cmd_pipeline(run_opts, "run");
  if (*train || *sep) {
    Common& c = *train ? train_opts : sep_opts;
    const char* name = *train ? "train" : "separate";
    if (c.config.empty() && c.exp.empty()) {
      std::fprintf(stderr, "bespoke %s: one of --config or --exp is required\n", name);
      return kExitInput;
    }
    return cmd_pipeline(c, name);
  }
  return cmd_eval(eval_opts);
}
