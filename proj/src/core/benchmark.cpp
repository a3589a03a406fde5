#include "bespoke/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "bespoke/error.hpp"
#include "bespoke/hash.hpp"
#include "bespoke/separate.hpp"
#include "bespoke/wav.hpp"

namespace bespoke {
namespace fs = std::filesystem;

namespace {

constexpr int kScale[] = {0, 2, 4, 5, 7, 9, 11};
constexpr int kRoots[] = {0, 5, 7, 9};  // I, IV, V, vi in C major

std::vector<int> triad(int root) {
  const int third = root == 9 ? 3 : 4;
  return {root, (root + third) % 12, (root + 7) % 12};
}

int lowest_with_class(int pc, int low) {
  int p = low + ((pc - low) % 12 + 12) % 12;
  return p;
}

std::vector<int> scale_pitches(int low, int high) {
  std::vector<int> out;
  for (int p = low; p <= high; ++p)
    if (std::find(std::begin(kScale), std::end(kScale), p % 12) != std::end(kScale)) out.push_back(p);
  return out;
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

void add_note(Track& track, std::size_t index, double onset, double duration, int pitch, int velocity, double end) {
  if (onset >= end) return;
  duration = std::min(duration, end - onset);
  if (duration < kMinNoteDuration) return;
  track.events.push_back(NoteEvent{onset, duration, pitch, velocity, index, static_cast<int>(index % 16)});
}

void compose_part(const PartSpec& part, std::size_t index, const std::vector<int>& chords, double beat,
                  double end, std::mt19937_64& rng, Track& track) {
  const double bar = 4 * beat;
  switch (part.role) {
    case PartRole::melody: {
      const auto pitches = scale_pitches(part.low_pitch, part.high_pitch);
      require(!pitches.empty(), "melody register holds no scale pitches");
      static constexpr double kLengths[] = {0.5, 1.0, 1.0, 1.5, 2.0};
      auto pos = static_cast<int>(pitches.size() / 2);
      for (double t = 0; t < end;) {
        const double len = kLengths[uniform_int(rng, 0, 4)] * beat;
        if (uniform(rng, 0, 1) >= 0.12) {
          int step = uniform_int(rng, -2, 2);
          if (step == 0) step = uniform(rng, 0, 1) < 0.5 ? -1 : 1;
          pos = std::clamp(pos + step, 0, static_cast<int>(pitches.size()) - 1);
          add_note(track, index, t, 0.9 * len, pitches[static_cast<std::size_t>(pos)], uniform_int(rng, 90, 115), end);
        }
        t += len;
      }
      break;
    }
    case PartRole::bass:
      for (std::size_t b = 0; b < chords.size(); ++b)
        for (int half = 0; half < 2; ++half) {
          const int pitch = lowest_with_class(chords[b], part.low_pitch);
          add_note(track, index, b * bar + half * 2 * beat, 1.8 * beat, pitch, uniform_int(rng, 95, 110), end);
        }
      break;
    case PartRole::pad:
      for (std::size_t b = 0; b < chords.size(); ++b)
        for (int pc : triad(chords[b])) {
          const int pitch = lowest_with_class(pc, part.low_pitch);
          if (pitch <= part.high_pitch) add_note(track, index, b * bar, 0.95 * bar, pitch, 80, end);
        }
      break;
    case PartRole::arpeggio:
      for (std::size_t b = 0; b < chords.size(); ++b) {
        std::vector<int> tones;
        for (int p = part.low_pitch; p <= part.high_pitch; ++p) {
          const auto t = triad(chords[b]);
          if (std::find(t.begin(), t.end(), p % 12) != t.end()) tones.push_back(p);
        }
        if (tones.empty()) continue;
        for (int k = 0; k < 8; ++k)
          add_note(track, index, b * bar + k * 0.5 * beat, 0.4 * beat, tones[static_cast<std::size_t>(k) % tones.size()],
                   uniform_int(rng, 85, 105), end);
      }
      break;
  }
}

PartRole role_from_string(const std::string& s, const std::string& where) {
  if (s == "melody") return PartRole::melody;
  if (s == "bass") return PartRole::bass;
  if (s == "pad") return PartRole::pad;
  if (s == "arpeggio") return PartRole::arpeggio;
  fail(Errc::validation, where + ": unknown role \"" + s + "\" (melody | bass | pad | arpeggio)");
}

const char* to_string(PartRole r) {
  switch (r) {
    case PartRole::melody: return "melody";
    case PartRole::bass: return "bass";
    case PartRole::pad: return "pad";
    case PartRole::arpeggio: return "arpeggio";
  }
  return "?";
}

PartSpec part_from_json(const Json& j, const std::string& where) {
  ObjectReader r(j, where);
  PartSpec p;
  p.name = r.required<std::string>("name");
  p.role = role_from_string(r.required<std::string>("role"), r.path("role"));
  const auto range = r.get<std::vector<double>>("pitch_range", {60, 84});
  if (range.size() != 2 || range[0] < 0 || range[1] > 127 || range[0] > range[1])
    fail(Errc::validation, r.path("pitch_range") + ": expected [low, high] within 0..127");
  p.low_pitch = static_cast<int>(range[0]);
  p.high_pitch = static_cast<int>(range[1]);
  const Json& train = r.at("train_patches");
  if (!train.is_array() || train.empty()) fail(Errc::validation, r.path("train_patches") + ": expected a non-empty array");
  for (std::size_t i = 0; i < train.size(); ++i)
    p.train_patches.push_back(patch_from_json(train[i], r.path("train_patches") + "[" + std::to_string(i) + "]"));
  p.test_patch = patch_from_json(r.at("test_patch"), r.path("test_patch"));
  p.level_db = r.get("level_db", 0.0);
  r.finish();
  return p;
}

Json to_json(const PartSpec& p) {
  Json train = Json::array();
  for (const Patch& patch : p.train_patches) train.push_back(to_json(patch));
  return {{"name", p.name},           {"role", to_string(p.role)},        {"pitch_range", {p.low_pitch, p.high_pitch}},
          {"train_patches", train},   {"test_patch", to_json(p.test_patch)}, {"level_db", p.level_db}};
}

SongSpec song_from_json(const Json& j, const std::string& where) {
  ObjectReader r(j, where);
  SongSpec s;
  s.name = r.required<std::string>("name");
  s.seed = r.get<std::uint64_t>("seed", 0);
  s.duration = r.get("duration_s", s.duration);
  s.tempo_bpm = r.get("tempo_bpm", s.tempo_bpm);
  s.target = part_from_json(r.at("target"), r.path("target"));
  if (const Json* a = r.find("accompaniment")) {
    if (!a->is_array()) fail(Errc::validation, r.path("accompaniment") + ": expected an array");
    for (std::size_t i = 0; i < a->size(); ++i)
      s.accompaniment.push_back(part_from_json((*a)[i], r.path("accompaniment") + "[" + std::to_string(i) + "]"));
  }
  s.background = strategy_from_string(r.get<std::string>("background", "synthesized_accompaniment"), r.path("background"));
  if (const Json* t = r.find("transcription")) {
    ObjectReader tr(*t, r.path("transcription"));
    s.transcription_stretch = tr.get("stretch", 1.0);
    s.transcription_shift = tr.get("shift_s", 0.0);
    tr.finish();
  }
  s.target_to_accompaniment_db = r.get("target_to_accompaniment_db", 0.0);
  r.finish();
  if (!(s.duration > 0 && s.duration <= 600)) fail(Errc::validation, r.path("duration_s") + ": must lie in (0, 600]");
  if (!(s.tempo_bpm >= 20 && s.tempo_bpm <= 400)) fail(Errc::validation, r.path("tempo_bpm") + ": must lie in [20, 400]");
  if (!(s.transcription_stretch >= 0.5 && s.transcription_stretch <= 2.0))
    fail(Errc::validation, r.path("transcription.stretch") + ": must lie in [0.5, 2]");
  if (s.background == BackgroundStrategy::synthesized_accompaniment && s.accompaniment.empty())
    fail(Errc::validation, where + ": synthesized accompaniment needs at least one accompaniment part");
  return s;
}

Json to_json(const SongSpec& s) {
  Json acc = Json::array();
  for (const PartSpec& p : s.accompaniment) acc.push_back(to_json(p));
  return {{"name", s.name},
          {"seed", s.seed},
          {"duration_s", s.duration},
          {"tempo_bpm", s.tempo_bpm},
          {"target", to_json(s.target)},
          {"accompaniment", acc},
          {"background", to_string(s.background)},
          {"transcription", {{"stretch", s.transcription_stretch}, {"shift_s", s.transcription_shift}}},
          {"target_to_accompaniment_db", s.target_to_accompaniment_db}};
}

AudioClip fit(AudioClip clip, std::size_t length) {
  clip.samples.resize(length, 0.0);
  return clip;
}

double relative_residual(const SeparationResult& r, const AudioClip& mixture) {
  double err = 0.0;
  for (std::size_t i = 0; i < mixture.size(); ++i) {
    const double d = r.estimate.samples[i] + r.residual.samples[i] - mixture.samples[i];
    err += d * d;
  }
  const double ref = energy(mixture.samples);
  return ref > 0 ? std::sqrt(err / ref) : std::sqrt(err);
}

}  // namespace

Score compose(const SongSpec& spec) {
  auto rng = derive_rng(spec.seed, 0);
  const double beat = 60.0 / spec.tempo_bpm;
  const auto bars = static_cast<std::size_t>(std::ceil(spec.duration / (4 * beat)));
  std::vector<int> chords(bars, 0);
  for (std::size_t b = 1; b < bars; ++b) chords[b] = kRoots[uniform_int(rng, 0, 3)];

  Score score;
  score.ticks_per_quarter = 480;
  score.tempo_map = {TempoChange{0, static_cast<std::uint32_t>(std::lround(60e6 / spec.tempo_bpm))}};
  std::vector<const PartSpec*> parts{&spec.target};
  for (const PartSpec& p : spec.accompaniment) parts.push_back(&p);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    Track track;
    track.name = parts[i]->name;
    // Separate generator per part so adding a part leaves the others unchanged.
    auto part_rng = derive_rng(spec.seed, i + 1);
    compose_part(*parts[i], i, chords, beat, spec.duration, part_rng, track);
    std::stable_sort(track.events.begin(), track.events.end(),
                     [](const NoteEvent& a, const NoteEvent& b) { return a.onset < b.onset; });
    score.tracks.push_back(std::move(track));
  }
  if (score.tracks[0].events.empty()) fail(Errc::empty_score, "song \"" + spec.name + "\": target part has no notes");
  return score;
}

SyntheticSong generate_song(const SongSpec& spec, int sample_rate) {
  SyntheticSong song;
  song.arrangement = compose(spec);
  song.transcription = song.arrangement;
  for (Track& t : song.transcription.tracks)
    for (NoteEvent& e : t.events) {
      e.onset = std::max(0.0, e.onset * spec.transcription_stretch + spec.transcription_shift);
      e.duration *= spec.transcription_stretch;
    }

  AudioClip target = scaled(render_events(song.arrangement.tracks[0].events, spec.target.test_patch, sample_rate),
                            db_to_gain(spec.target.level_db));
  AudioClip acc = AudioClip::zeros(0, sample_rate);
  for (std::size_t i = 0; i < spec.accompaniment.size(); ++i) {
    const auto& events = song.arrangement.tracks[i + 1].events;
    if (events.empty()) continue;
    const PartSpec& part = spec.accompaniment[i];
    acc = add(acc, scaled(render_events(events, part.test_patch, sample_rate), db_to_gain(part.level_db)));
  }
  const std::size_t length =
      std::max({target.size(), acc.size(), seconds_to_samples(spec.duration, sample_rate)});
  target = fit(std::move(target), length);
  acc = fit(std::move(acc), length);

  const double et = energy(target.samples);
  const double ea = energy(acc.samples);
  if (et > 0 && ea > 0) target = scaled(target, std::sqrt(ea / et * std::pow(10.0, spec.target_to_accompaniment_db / 10)));
  AudioClip mix = add(target, acc);
  const double p = peak(mix);
  if (p > 0.9) {
    const double g = 0.9 / p;
    target = scaled(target, g);
    acc = scaled(acc, g);
    mix = add(target, acc);
  }
  song.target = std::move(target);
  song.accompaniment = std::move(acc);
  song.mixture = std::move(mix);
  return song;
}

BenchConfig parse_bench_config(const std::string& text, const ConfigOptions& options) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("benchmark config: malformed JSON: ") + e.what(), e.byte);
  }
  ObjectReader r(root, "benchmark");
  BenchConfig c;
  c.sample_rate = r.get("sample_rate", c.sample_rate);
  if (c.sample_rate < 4000 || c.sample_rate > 192000) fail(Errc::validation, "benchmark.sample_rate: must lie in [4000, 192000]");
  if (const Json* s = r.find("stft")) c.stft = stft_from_json(*s, "benchmark.stft");
  const Json* model = r.find("model");
  c.model = model_from_json(model ? *model : Json::object(), "benchmark.model", c.stft.bins());
  if (const Json* t = r.find("train")) c.train = train_from_json(*t, "benchmark.train");
  if (const Json* a = r.find("augment")) {
    ObjectReader ar(*a, "benchmark.augment");
    if (const Json* g = ar.find("ranges")) c.ranges = ranges_from_json(*g, "benchmark.augment.ranges");
    c.excerpt = ar.get("excerpt_s", c.excerpt);
    if (const Json* k = ar.find("compressor")) c.compressor = compressor_from_json(*k, "benchmark.augment.compressor");
    ar.finish();
  }
  RangeLimits{options.allow_wide_ranges}.check(c.ranges, "benchmark.augment.ranges");
  if (!(c.excerpt > 0)) fail(Errc::validation, "benchmark.augment.excerpt_s: must be positive");
  if (const Json* s = r.find("separate")) c.chunk = chunk_from_json(*s, "benchmark.separate");
  c.background_variants = r.get("background_variants", c.background_variants);
  if (c.background_variants < 1) fail(Errc::validation, "benchmark.background_variants: must be >= 1");
  c.seed = r.get<std::uint64_t>("seed", 0);
  const Json& songs = r.at("songs");
  if (!songs.is_array() || songs.empty()) fail(Errc::validation, "benchmark.songs: expected a non-empty array");
  for (std::size_t i = 0; i < songs.size(); ++i)
    c.songs.push_back(song_from_json(songs[i], "benchmark.songs[" + std::to_string(i) + "]"));
  r.finish();
  return c;
}

BenchConfig load_bench_config(const fs::path& path, const ConfigOptions& options) {
  const auto bytes = read_file(path);
  return parse_bench_config(std::string(bytes.begin(), bytes.end()), options);
}

Json to_json(const BenchConfig& c) {
  Json songs = Json::array();
  for (const SongSpec& s : c.songs) songs.push_back(to_json(s));
  Json model = to_json(c.model);
  model.erase("input_bins");
  return {{"sample_rate", c.sample_rate},
          {"stft", to_json(c.stft)},
          {"model", model},
          {"train", to_json(c.train)},
          {"augment", {{"ranges", to_json(c.ranges)}, {"excerpt_s", c.excerpt}, {"compressor", to_json(c.compressor)}}},
          {"separate", to_json(c.chunk)},
          {"background_variants", c.background_variants},
          {"seed", c.seed},
          {"songs", songs}};
}

Json to_json(const EvalReport& r) {
  Json j = {{"song", r.song},
            {"status", r.ok ? "ok" : "failed"},
            {"si_sdr_db", r.si_sdr},
            {"baseline_si_sdr_db", r.baseline},
            {"si_sdr_improvement_db", r.improvement},
            {"oracle_si_sdr_db", r.oracle},
            {"first_loss", r.first_loss},
            {"final_loss", r.final_loss},
            {"reconstruction_error", r.estimate_plus_residual_error},
            {"steps", r.steps},
            {"seeds", {{"global", r.seeds.global}, {"song", r.song_seed}, {"stream", r.seeds.stream},
                       {"init", r.seeds.init}, {"train", r.seeds.train}}},
            {"config_hash", r.config_hash},
            {"estimate_sha256", r.stems_sha256},
            {"wall_time_s", r.wall_time_s}};
  if (!r.ok) j["error"] = r.error;
  return j;
}

std::string reports_json(const std::vector<EvalReport>& reports) {
  Json arr = Json::array();
  for (const EvalReport& r : reports) arr.push_back(to_json(r));
  return Json{{"reports", arr}}.dump(2) + "\n";
}

EvalReport evaluate_song(const BenchConfig& config, std::size_t song_index, const BenchOptions& options) {
  require(song_index < config.songs.size(), "benchmark: song index out of range");
  const SongSpec& spec = config.songs[song_index];
  const auto start = std::chrono::steady_clock::now();
  EvalReport report;
  report.song = spec.name;
  report.song_seed = spec.seed;
  report.seeds = plan_seeds(config.seed, song_index + 1);
  report.config_hash = sha256_hex(to_json(config).dump());
  TrainConfig tc = config.train;
  if (options.steps) tc.steps = *options.steps;
  tc.seed = report.seeds.train;
  report.steps = tc.steps;

  try {
    const SyntheticSong song = generate_song(spec, config.sample_rate);
    const int sr = config.sample_rate;

    TargetRenderFn render = make_target_renderer(song.transcription.tracks[0].events, spec.target.train_patches, sr);
    BackgroundSource background;
    if (spec.background == BackgroundStrategy::original_mixture) {
      background.strategy = BackgroundStrategy::original_mixture;
      background.payload = song.mixture;
    } else {
      PatchBank bank;
      std::map<std::size_t, std::string> instruments;
      std::map<std::size_t, std::vector<NoteEvent>> tracks;
      for (std::size_t i = 0; i < spec.accompaniment.size(); ++i) {
        const auto& events = song.transcription.tracks[i + 1].events;
        if (events.empty()) continue;
        bank.instruments[spec.accompaniment[i].name] = spec.accompaniment[i].train_patches;
        instruments[i + 1] = spec.accompaniment[i].name;
        tracks[i + 1] = events;
      }
      background = synthesize_background(tracks, bank, instruments, config.background_variants, sr);
    }

    StreamSettings settings;
    settings.seed = report.seeds.stream;
    settings.count = static_cast<std::size_t>(tc.steps) * static_cast<std::size_t>(tc.batch_size);
    settings.excerpt_len = config.excerpt;
    settings.nominal_target_len = render(0, 1.0).duration();
    settings.space.ranges = config.ranges;
    settings.space.target_patches = spec.target.train_patches.size();
    settings.compressor = config.compressor;
    ExampleStream stream(settings, std::move(render), std::move(background));

    TrainingState state(MaskNet::initialized(config.model, report.seeds.init));
    bool first = true;
    state = train(std::move(state), stream, config.stft, tc, [&](const TrainRecord& rec) {
      if (first) report.first_loss = rec.loss;
      first = false;
      report.final_loss = rec.loss;
      if (options.log) options.log(spec.name, rec);
    });

    const SeparationResult est = separate(song.mixture, state.net, config.stft, config.chunk);
    report.si_sdr = si_sdr(est.estimate, song.target);
    report.baseline = si_sdr(song.mixture, song.target);
    report.improvement = report.si_sdr - report.baseline;
    report.estimate_plus_residual_error = relative_residual(est, song.mixture);

    const Spectrogram mix_spec = stft(song.mixture, config.stft);
    const RealMatrix oracle = oracle_mask(mix_spec, stft(song.target, config.stft));
    const SeparationResult best = separate_with_mask(song.mixture, oracle, config.stft);
    report.oracle = si_sdr(best.estimate, song.target);

    const auto estimate_bytes = encode_wav(est.estimate, WavEncoding::float32);
    report.stems_sha256 = sha256_hex(estimate_bytes);
    if (!options.stems_dir.empty()) {
      const fs::path dir = options.stems_dir / spec.name;
      fs::create_directories(dir);
      write_file(dir / "estimate.wav", estimate_bytes);
      write_wav(dir / "residual.wav", est.residual);
      write_wav(dir / "mixture.wav", song.mixture);
      write_wav(dir / "reference.wav", song.target);
    }
    report.ok = true;
  } catch (const std::exception& e) {
    report.ok = false;
    report.error = e.what();
  }
  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::vector<EvalReport> run_benchmark(const BenchConfig& config, const BenchOptions& options) {
  std::vector<EvalReport> reports;
  for (std::size_t i = 0; i < config.songs.size(); ++i) reports.push_back(evaluate_song(config, i, options));
  return reports;
}

}  // namespace bespoke
