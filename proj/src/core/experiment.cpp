#include "bespoke/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "bespoke/error.hpp"
#include "bespoke/hash.hpp"
#include "bespoke/score.hpp"
#include "bespoke/wav.hpp"

namespace bespoke {
namespace fs = std::filesystem;

namespace {

constexpr const char* kCheckpointPrefix = "step-";
constexpr const char* kCheckpointSuffix = ".ckpt";

std::string read_text(const fs::path& path) {
  const auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::optional<std::int64_t> checkpoint_step(const fs::path& p) {
  const std::string name = p.filename().string();
  const std::string prefix = kCheckpointPrefix, suffix = kCheckpointSuffix;
  if (name.size() <= prefix.size() + suffix.size() || !name.starts_with(prefix) || !name.ends_with(suffix))
    return std::nullopt;
  const std::string digits = name.substr(prefix.size(), name.size() - prefix.size() - suffix.size());
  if (!std::all_of(digits.begin(), digits.end(), [](unsigned char c) { return std::isdigit(c); })) return std::nullopt;
  return std::stoll(digits);
}

std::string checkpoint_name(std::int64_t step) {
  std::ostringstream os;
  os << kCheckpointPrefix << std::setw(7) << std::setfill('0') << step << kCheckpointSuffix;
  return os.str();
}

// Drops log lines past `step` so a resumed run appends contiguously. Returns
// the wall time of the last kept line.
double trim_log(const fs::path& log, std::int64_t step) {
  if (!fs::exists(log)) return 0.0;
  std::ifstream in(log);
  std::string line, kept;
  double wall = 0.0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Json rec;
    try {
      rec = Json::parse(line);
    } catch (const Json::parse_error&) {
      break;  // a torn final line from an interrupted write
    }
    if (rec.value("step", std::int64_t{0}) > step) break;
    wall = rec.value("wall_time_s", 0.0);
    kept += line + "\n";
  }
  in.close();
  write_text(log, kept);
  return wall;
}

std::size_t resolve_track(const Score& score, const std::string& key) {
  return select_target(score, parse_selector(key)).target_track;
}

}  // namespace

fs::path resolve_output_root(const std::optional<fs::path>& cli, const fs::path& from_config) {
  if (cli && !cli->empty()) return *cli;
  if (!from_config.empty()) return from_config;
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) return fs::path(env);
  return fs::path("experiments");
}

fs::path create_run_dir(const fs::path& root, const std::string& prefix) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) fail(Errc::io, "cannot create output root " + root.string() + ": " + ec.message());
  for (int n = 1; n < 100000; ++n) {
    std::ostringstream name;
    name << prefix << "-" << std::setw(4) << std::setfill('0') << n;
    const fs::path dir = root / name.str();
    if (fs::create_directory(dir, ec)) return dir;
    if (ec) fail(Errc::io, "cannot create " + dir.string() + ": " + ec.message());
  }
  fail(Errc::io, "no free run directory under " + root.string());
}

Experiment::Experiment(fs::path dir, ProjectConfig config, Json run)
    : dir_(std::move(dir)), config_(std::move(config)), run_(std::move(run)) {
  seeds_ = plan_seeds(config_.seed);
}

Experiment Experiment::create(const fs::path& config_path, const RunOverrides& overrides) {
  const std::string text = read_text(config_path);
  const fs::path config_dir = fs::absolute(config_path).parent_path();
  ProjectConfig config = parse_project_config(text, config_dir, {overrides.allow_wide_ranges, true});
  Json over = Json::object();
  if (overrides.seed) {
    config.seed = *overrides.seed;
    over["seed"] = *overrides.seed;
  }
  if (overrides.steps) {
    config.train.steps = *overrides.steps;
    over["steps"] = *overrides.steps;
    config.train.validate();
  }
  config.train.seed = config.seed;
  if (overrides.allow_wide_ranges) over["allow_wide_ranges"] = true;

  const fs::path root = resolve_output_root(overrides.output_root, config.output_dir);
  const fs::path dir = create_run_dir(root, config_path.stem().string());
  write_text(dir / "config.json", text);
  Json run = {{"config_source", fs::absolute(config_path).lexically_normal().string()},
              {"config_dir", config_dir.string()},
              {"config_sha256", sha256_hex(text)},
              {"overrides", over}};
  Experiment exp(dir, std::move(config), std::move(run));
  exp.write_run_record();
  exp.write_manifest();
  return exp;
}

Experiment Experiment::open(const fs::path& dir) {
  if (!fs::is_regular_file(dir / "run.json") || !fs::is_regular_file(dir / "config.json"))
    fail(Errc::dependency, dir.string() + " is not an experiment directory (missing run.json or config.json)");
  Json run;
  try {
    run = Json::parse(read_text(dir / "run.json"));
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("run.json: ") + e.what(), e.byte);
  }
  const Json over = run.value("overrides", Json::object());
  ConfigOptions options{over.value("allow_wide_ranges", false), true};
  ProjectConfig config = parse_project_config(read_text(dir / "config.json"), run.at("config_dir").get<std::string>(), options);
  if (over.contains("seed")) config.seed = over["seed"].get<std::uint64_t>();
  if (over.contains("steps")) config.train.steps = over["steps"].get<std::int64_t>();
  config.train.seed = config.seed;
  return Experiment(dir, std::move(config), std::move(run));
}

std::optional<fs::path> Experiment::latest_checkpoint() const {
  const fs::path dir = dir_ / "checkpoints";
  if (!fs::is_directory(dir)) return std::nullopt;
  std::optional<fs::path> best;
  std::int64_t best_step = -1;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (auto s = checkpoint_step(entry.path()); s && *s > best_step) {
      best_step = *s;
      best = entry.path();
    }
  }
  return best;
}

template <typename F>
auto Experiment::stage(const char* name, F&& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    const auto* err = dynamic_cast<const Error*>(&e);
    const Errc code = err ? err->code() : Errc::runtime;
    const std::string message = std::string("[") + name + "] " + e.what();
    try {
      write_text(dir_ / "FAILED",
                 Json{{"stage", name}, {"code", errc_name(code)}, {"message", e.what()}}.dump(2) + "\n");
      write_manifest();
    } catch (...) {
      // the original failure is the one worth reporting
    }
    throw Error(code, message);
  }
}

void Experiment::write_run_record() const {
  Json run = run_;
  run["seed"] = config_.seed;
  run["seeds"] = {{"stream", seeds_.stream}, {"init", seeds_.init}, {"train", seeds_.train}};
  run["steps"] = config_.train.steps;
  write_text(dir_ / "run.json", run.dump(2) + "\n");
}

void Experiment::write_manifest() const {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir_)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), dir_);
    if (rel == "manifest.json" || rel.extension() == ".tmp") continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  Json artifacts = Json::array();
  for (const fs::path& rel : files) {
    artifacts.push_back({{"path", rel.generic_string()},
                         {"sha256", sha256_file(dir_ / rel)},
                         {"bytes", fs::file_size(dir_ / rel)}});
  }
  write_text(dir_ / "manifest.json", Json{{"artifacts", artifacts}}.dump(2) + "\n");
}

void Experiment::train(std::optional<std::int64_t> steps, const LogSink& progress) {
  fs::remove(dir_ / "FAILED");
  if (steps) {
    config_.train.steps = *steps;
    stage("configure", [&] { config_.train.validate(); });
    run_["overrides"]["steps"] = *steps;
    write_run_record();
  }
  const ProjectConfig& c = config_;
  const Score score = stage("parse", [&] { return read_midi(c.midi); });
  const Partition part = stage("select", [&] { return select_target(score, parse_selector(c.target)); });

  auto [render, background] = stage("synth", [&] {
    TargetRenderFn fn = make_target_renderer(part.target, c.patches.instruments.at(c.target_instrument), c.sample_rate);
    BackgroundSource bg;
    if (c.background == BackgroundStrategy::original_mixture) {
      bg.strategy = BackgroundStrategy::original_mixture;
      bg.payload = load_audio(c.mixture, c.sample_rate);
    } else {
      std::map<std::size_t, std::string> instruments;
      for (const auto& [key, instrument] : c.accompaniment) {
        const std::size_t track = resolve_track(score, key);
        if (track == part.target_track) fail(Errc::configuration, "accompaniment \"" + key + "\" is the target track");
        instruments[track] = instrument;
      }
      bg = synthesize_background(group_by_track(part.accompaniment), c.patches, instruments, c.background_variants,
                                 c.sample_rate);
    }
    return std::pair{std::move(fn), std::move(bg)};
  });

  const ExampleStream stream = stage("stream", [&] {
    StreamSettings s;
    s.seed = seeds_.stream;
    s.count = static_cast<std::size_t>(c.train.steps) * static_cast<std::size_t>(c.train.batch_size);
    s.excerpt_len = c.excerpt;
    s.nominal_target_len = render(0, 1.0).duration();
    s.space.ranges = c.ranges;
    s.space.target_patches = c.patches.instruments.at(c.target_instrument).size();
    s.compressor = c.compressor;
    ExampleStream out(s, render, background);
    out.at(0);  // surfaces crop and silence problems before any training
    return out;
  });

  stage("train", [&] {
    fs::create_directories(dir_ / "checkpoints");
    fs::create_directories(dir_ / "logs");
    TrainingState state(MaskNet::initialized(c.model, seeds_.init));
    if (const auto latest = latest_checkpoint()) {
      state = load_training_state(*latest);
      if (!(state.net.config() == c.model))
        fail(Errc::incompatible_checkpoint, latest->string() + " was trained with a different model config");
    }
    const fs::path log_path = dir_ / "logs" / "train.jsonl";
    const double wall_offset = trim_log(log_path, state.step);
    std::ofstream log(log_path, std::ios::app);
    if (!log) fail(Errc::io, "cannot append to " + log_path.string());

    auto sink = [&](const TrainRecord& r) {
      TrainRecord shifted = r;
      shifted.wall_time_s += wall_offset;
      log << Json{{"step", r.step}, {"wall_time_s", shifted.wall_time_s}, {"loss", r.loss}}.dump() << '\n';
      log.flush();
      if (progress) progress(shifted);
    };
    auto checkpoint = [&](const TrainingState& s) {
      const fs::path final_path = dir_ / "checkpoints" / checkpoint_name(s.step);
      const fs::path tmp = final_path.string() + ".tmp";
      save_checkpoint(s, tmp);
      fs::rename(tmp, final_path);
    };
    TrainConfig tc = c.train;
    tc.seed = seeds_.train;
    bespoke::train(std::move(state), stream, c.stft, tc, sink, checkpoint);
  });
  write_manifest();
}

SeparationResult Experiment::separate() {
  fs::remove(dir_ / "FAILED");
  const auto start = std::chrono::steady_clock::now();
  const fs::path checkpoint = stage("separate", [&] {
    auto latest = latest_checkpoint();
    if (!latest)
      fail(Errc::dependency, "no checkpoint in " + (dir_ / "checkpoints").string() + "; run the train stage first");
    return *latest;
  });
  SeparationResult result = stage("separate", [&] {
    const MaskNet net = load_checkpoint(checkpoint, config_.model);
    const AudioClip mixture = load_audio(config_.mixture, config_.sample_rate);
    SeparationResult r = bespoke::separate(mixture, net, config_.stft, config_.chunk);
    fs::create_directories(dir_ / "stems");
    write_wav(dir_ / "stems" / "estimate.wav", r.estimate);
    write_wav(dir_ / "stems" / "residual.wav", r.residual);

    double err = 0.0;
    for (std::size_t i = 0; i < mixture.size(); ++i) {
      const double d = r.estimate.samples[i] + r.residual.samples[i] - mixture.samples[i];
      err += d * d;
    }
    const double mix_energy = energy(mixture.samples);
    Json report = {
        {"checkpoint", fs::relative(checkpoint, dir_).generic_string()},
        {"checkpoint_step", checkpoint_step(checkpoint).value_or(0)},
        {"mixture", config_.mixture.string()},
        {"sample_rate", config_.sample_rate},
        {"samples", mixture.size()},
        {"mean_mask", r.mean_mask},
        {"masked_energy_fraction", r.masked_energy_fraction},
        {"reconstruction_error", mix_energy > 0 ? std::sqrt(err / mix_energy) : std::sqrt(err)},
        {"stems",
         {{"estimate", sha256_file(dir_ / "stems" / "estimate.wav")},
          {"residual", sha256_file(dir_ / "stems" / "residual.wav")}}},
        {"wall_time_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
    write_text(dir_ / "report.json", report.dump(2) + "\n");
    return r;
  });
  write_manifest();
  return result;
}

void Experiment::run(const LogSink& progress) {
  train({}, progress);
  separate();
}

}  // namespace bespoke
