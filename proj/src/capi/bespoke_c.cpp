#include "bespoke/bespoke.h"

#include <algorithm>
#include <cstring>
#include <new>
#include <string>

#include "bespoke/benchmark.hpp"
#include "bespoke/error.hpp"
#include "bespoke/experiment.hpp"
#include "bespoke/score.hpp"
#include "bespoke/wav.hpp"

struct bespoke_experiment {
  bespoke::Experiment exp;
  std::string dir;
};

namespace {

thread_local std::string last_error;

bespoke_status to_status(bespoke::Errc code) {
  using bespoke::Errc;
  switch (code) {
    case Errc::invalid_argument: return BESPOKE_ERR_INVALID_ARGUMENT;
    case Errc::parse: return BESPOKE_ERR_PARSE;
    case Errc::unsupported_format: return BESPOKE_ERR_UNSUPPORTED_FORMAT;
    case Errc::out_of_range: return BESPOKE_ERR_OUT_OF_RANGE;
    case Errc::io: return BESPOKE_ERR_IO;
    case Errc::validation: return BESPOKE_ERR_VALIDATION;
    case Errc::configuration: return BESPOKE_ERR_CONFIGURATION;
    case Errc::dependency: return BESPOKE_ERR_DEPENDENCY;
    case Errc::incompatible_checkpoint: return BESPOKE_ERR_INCOMPATIBLE_CHECKPOINT;
    case Errc::selector: return BESPOKE_ERR_SELECTOR;
    case Errc::degenerate_silence: return BESPOKE_ERR_DEGENERATE_SILENCE;
    case Errc::empty_score: return BESPOKE_ERR_EMPTY_SCORE;
    case Errc::too_short: return BESPOKE_ERR_TOO_SHORT;
    case Errc::numeric: return BESPOKE_ERR_NUMERIC;
    case Errc::runtime: return BESPOKE_ERR_RUNTIME;
  }
  return BESPOKE_ERR_INTERNAL;
}

template <typename F>
bespoke_status guarded(F&& body) {
  last_error.clear();
  try {
    body();
    return BESPOKE_OK;
  } catch (const bespoke::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return BESPOKE_ERR_RUNTIME;
  } catch (const std::filesystem::filesystem_error& e) {
    last_error = e.what();
    return BESPOKE_ERR_IO;
  } catch (const std::exception& e) {
    last_error = e.what();
    return BESPOKE_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown exception";
    return BESPOKE_ERR_INTERNAL;
  }
}

char* duplicate(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* what) {
  if (!p) bespoke::fail(bespoke::Errc::invalid_argument, std::string(what) + " must not be NULL");
}

bespoke::RunOverrides convert(const bespoke_overrides* o) {
  bespoke::RunOverrides out;
  if (!o) return out;
  if (o->has_seed) out.seed = o->seed;
  if (o->has_steps) out.steps = o->steps;
  if (o->output_root && *o->output_root) out.output_root = std::filesystem::path(o->output_root);
  out.allow_wide_ranges = o->allow_wide_ranges != 0;
  return out;
}

bespoke::LogSink progress_sink(bespoke_progress_fn fn, void* user) {
  if (!fn) return {};
  return [fn, user](const bespoke::TrainRecord& r) { fn(r.step, r.wall_time_s, r.loss, user); };
}

}  // namespace

extern "C" {

const char* bespoke_version(void) { return "1.0.0"; }

const char* bespoke_last_error(void) { return last_error.c_str(); }

const char* bespoke_status_name(bespoke_status status) {
  switch (status) {
    case BESPOKE_OK: return "ok";
    case BESPOKE_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case BESPOKE_ERR_PARSE: return "parse";
    case BESPOKE_ERR_UNSUPPORTED_FORMAT: return "unsupported-format";
    case BESPOKE_ERR_OUT_OF_RANGE: return "out-of-range";
    case BESPOKE_ERR_IO: return "io";
    case BESPOKE_ERR_VALIDATION: return "validation";
    case BESPOKE_ERR_CONFIGURATION: return "configuration";
    case BESPOKE_ERR_DEPENDENCY: return "dependency";
    case BESPOKE_ERR_INCOMPATIBLE_CHECKPOINT: return "incompatible-checkpoint";
    case BESPOKE_ERR_SELECTOR: return "selector";
    case BESPOKE_ERR_DEGENERATE_SILENCE: return "degenerate-silence";
    case BESPOKE_ERR_EMPTY_SCORE: return "empty-score";
    case BESPOKE_ERR_TOO_SHORT: return "too-short";
    case BESPOKE_ERR_NUMERIC: return "numeric";
    case BESPOKE_ERR_RUNTIME: return "runtime";
    case BESPOKE_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

int bespoke_status_is_input_error(bespoke_status status) {
  switch (status) {
    case BESPOKE_ERR_INVALID_ARGUMENT:
    case BESPOKE_ERR_PARSE:
    case BESPOKE_ERR_UNSUPPORTED_FORMAT:
    case BESPOKE_ERR_IO:
    case BESPOKE_ERR_VALIDATION:
    case BESPOKE_ERR_CONFIGURATION:
    case BESPOKE_ERR_DEPENDENCY:
    case BESPOKE_ERR_INCOMPATIBLE_CHECKPOINT:
    case BESPOKE_ERR_SELECTOR:
    case BESPOKE_ERR_EMPTY_SCORE:
    case BESPOKE_ERR_TOO_SHORT:
      return 1;
    default:
      return 0;
  }
}

void bespoke_string_free(char* s) { std::free(s); }

bespoke_status bespoke_tracks_json(const char* midi_path, char** out_json) {
  return guarded([&] {
    need(midi_path, "midi_path");
    need(out_json, "out_json");
    const bespoke::Score score = bespoke::read_midi(midi_path);
    bespoke::Json rows = bespoke::Json::array();
    for (std::size_t i = 0; i < score.tracks.size(); ++i) {
      const auto& events = score.tracks[i].events;
      bespoke::Json row = {{"index", i}, {"name", score.tracks[i].name}, {"notes", events.size()}};
      if (events.empty()) {
        row["min_pitch"] = nullptr;
        row["max_pitch"] = nullptr;
      } else {
        auto [lo, hi] = std::minmax_element(events.begin(), events.end(),
                                            [](const auto& a, const auto& b) { return a.pitch < b.pitch; });
        row["min_pitch"] = lo->pitch;
        row["max_pitch"] = hi->pitch;
      }
      rows.push_back(row);
    }
    *out_json = duplicate(rows.dump());
  });
}

bespoke_status bespoke_config_validate(const char* config_path, int allow_wide_ranges, char** out_json) {
  return guarded([&] {
    need(config_path, "config_path");
    const auto config = bespoke::load_project_config(config_path, {allow_wide_ranges != 0, true});
    if (out_json) *out_json = duplicate(bespoke::to_json(config).dump(2));
  });
}

bespoke_status bespoke_experiment_create(const char* config_path, const bespoke_overrides* overrides,
                                         bespoke_experiment** out) {
  return guarded([&] {
    need(config_path, "config_path");
    need(out, "out");
    auto exp = bespoke::Experiment::create(config_path, convert(overrides));
    const std::string dir = exp.dir().string();
    *out = new bespoke_experiment{std::move(exp), dir};
  });
}

bespoke_status bespoke_experiment_open(const char* dir, bespoke_experiment** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    auto exp = bespoke::Experiment::open(dir);
    *out = new bespoke_experiment{std::move(exp), std::string(dir)};
  });
}

void bespoke_experiment_free(bespoke_experiment* exp) { delete exp; }

const char* bespoke_experiment_dir(const bespoke_experiment* exp) { return exp ? exp->dir.c_str() : nullptr; }

bespoke_status bespoke_experiment_train(bespoke_experiment* exp, int64_t steps, bespoke_progress_fn progress,
                                        void* user) {
  return guarded([&] {
    need(exp, "exp");
    std::optional<std::int64_t> target;
    if (steps > 0) target = steps;
    exp->exp.train(target, progress_sink(progress, user));
  });
}

bespoke_status bespoke_experiment_separate(bespoke_experiment* exp) {
  return guarded([&] {
    need(exp, "exp");
    exp->exp.separate();
  });
}

bespoke_status bespoke_experiment_run(bespoke_experiment* exp, bespoke_progress_fn progress, void* user) {
  return guarded([&] {
    need(exp, "exp");
    exp->exp.run(progress_sink(progress, user));
  });
}

bespoke_status bespoke_benchmark_run(const char* bench_path, const bespoke_overrides* overrides,
                                     bespoke_progress_fn progress, void* user, char** out_dir) {
  return guarded([&] {
    need(bench_path, "bench_path");
    const auto o = convert(overrides);
    bespoke::BenchConfig config = bespoke::load_bench_config(bench_path, {o.allow_wide_ranges, false});
    if (o.seed) config.seed = *o.seed;
    bespoke::BenchOptions options;
    options.steps = o.steps;
    if (options.steps && *options.steps < 1)
      bespoke::fail(bespoke::Errc::validation, "steps override must be at least 1");
    if (progress) {
      options.log = [progress, user](const std::string&, const bespoke::TrainRecord& r) {
        progress(r.step, r.wall_time_s, r.loss, user);
      };
    }
    const auto root = bespoke::resolve_output_root(o.output_root);
    const auto dir = bespoke::create_run_dir(root, std::filesystem::path(bench_path).stem().string());
    options.stems_dir = dir / "stems";
    const auto reports = bespoke::run_benchmark(config, options);
    const std::string text = bespoke::reports_json(reports);
    bespoke::write_file(dir / "report.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    if (out_dir) *out_dir = duplicate(dir.string());
  });
}

}  // extern "C"
