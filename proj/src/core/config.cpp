#include "bespoke/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "bespoke/error.hpp"
#include "bespoke/wav.hpp"

namespace bespoke {
namespace fs = std::filesystem;

namespace {

[[noreturn]] void invalid(const std::string& where, const std::string& what) {
  fail(Errc::validation, where + ": " + what);
}

// Re-tags component validation failures so the caller sees where they came from.
template <typename F>
void checked(const std::string& where, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    invalid(where, e.what());
  }
}

const Json& expect_object(const Json& j, const std::string& where) {
  if (!j.is_object()) invalid(where, "expected an object");
  return j;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

ObjectReader::ObjectReader(const Json& value, std::string where) : value_(value), where_(std::move(where)) {
  expect_object(value_, where_);
}

bool ObjectReader::has(const std::string& key) const { return value_.contains(key); }

const Json& ObjectReader::at(const std::string& key) {
  const Json* v = find(key);
  if (!v) invalid(where_, "missing required key \"" + key + "\"");
  return *v;
}

const Json* ObjectReader::find(const std::string& key) {
  auto it = value_.find(key);
  if (it == value_.end()) return nullptr;
  seen_.insert(key);
  return &*it;
}

void ObjectReader::finish() const {
  std::string unknown;
  for (const auto& [key, _] : value_.items()) {
    if (!seen_.count(key)) unknown += (unknown.empty() ? "\"" : ", \"") + key + "\"";
  }
  if (!unknown.empty()) invalid(where_, "unknown key(s) " + unknown);
}

template <typename T>
T ObjectReader::convert(const Json& v, const std::string& key) const {
  const std::string at = path(key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) invalid(at, "expected a boolean");
    return v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) invalid(at, "expected a string");
    return v.get<std::string>();
  } else if constexpr (std::is_same_v<T, double>) {
    if (!v.is_number()) invalid(at, "expected a number");
    return v.get<double>();
  } else if constexpr (std::is_same_v<T, std::uint64_t>) {
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      invalid(at, "expected a non-negative integer");
    return v.get<std::uint64_t>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) invalid(at, "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max()) invalid(at, "integer out of range");
    return static_cast<T>(x);
  } else if constexpr (std::is_same_v<T, std::vector<double>>) {
    if (!v.is_array()) invalid(at, "expected an array of numbers");
    std::vector<double> out;
    for (const Json& e : v) {
      if (!e.is_number()) invalid(at, "expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  } else {
    static_assert(sizeof(T) == 0, "unsupported config value type");
  }
}

template bool ObjectReader::convert<bool>(const Json&, const std::string&) const;
template std::string ObjectReader::convert<std::string>(const Json&, const std::string&) const;
template double ObjectReader::convert<double>(const Json&, const std::string&) const;
template int ObjectReader::convert<int>(const Json&, const std::string&) const;
template std::int64_t ObjectReader::convert<std::int64_t>(const Json&, const std::string&) const;
template std::uint64_t ObjectReader::convert<std::uint64_t>(const Json&, const std::string&) const;
template std::vector<double> ObjectReader::convert<std::vector<double>>(const Json&, const std::string&) const;

void RangeLimits::check(const AugmentRanges& r, const std::string& where) const {
  checked(where, [&] { r.validate(); });
  const double gain_lo = allow_wide ? -60.0 : -12.0;
  const double gain_hi = allow_wide ? 24.0 : 6.0;
  const double ratio_hi = allow_wide ? 100.0 : 20.0;
  const double scale_lo = allow_wide ? 0.5 : 0.9;
  const double scale_hi = allow_wide ? 2.0 : 1.1;
  const std::string hint = allow_wide ? "" : " (pass --allow-wide-ranges to widen)";
  auto bounds = [](double lo, double hi) {
    std::ostringstream s;
    s << "[" << lo << ", " << hi << "]";
    return s.str();
  };
  if (r.gain_min_db < gain_lo || r.gain_max_db > gain_hi)
    invalid(where, "gain range " + bounds(r.gain_min_db, r.gain_max_db) + " dB exceeds " + bounds(gain_lo, gain_hi) + hint);
  for (double ratio : r.ratios)
    if (ratio > ratio_hi) invalid(where, "compression ratio above " + bounds(1, ratio_hi) + hint);
  if (r.time_scale_min < scale_lo || r.time_scale_max > scale_hi)
    invalid(where, "time-scale range exceeds " + bounds(scale_lo, scale_hi) + hint);
}

StftParams stft_from_json(const Json& j, const std::string& where) {
  ObjectReader r(j, where);
  StftParams p;
  p.window_length = r.get("window_length", p.window_length);
  p.hop_length = r.get("hop_length", p.hop_length);
  p.fft_size = r.get("fft_size", p.fft_size);
  const std::string w = r.get<std::string>("window", "sqrt_hann");
  if (w == "sqrt_hann") p.window = WindowKind::sqrt_hann;
  else if (w == "hann") p.window = WindowKind::hann;
  else if (w == "rectangular") p.window = WindowKind::rectangular;
  else invalid(r.path("window"), "unknown window \"" + w + "\"");
  r.finish();
  checked(where, [&] { p.validate(); });
  return p;
}

Json to_json(const StftParams& p) {
  const char* w = p.window == WindowKind::sqrt_hann ? "sqrt_hann" : p.window == WindowKind::hann ? "hann" : "rectangular";
  return {{"window_length", p.window_length}, {"hop_length", p.hop_length}, {"fft_size", p.fft_size}, {"window", w}};
}

Patch patch_from_json(const Json& j, const std::string& where) {
  ObjectReader r(j, where);
  Patch p;
  const std::string w = r.get<std::string>("waveform", "sawtooth");
  if (w == "sine") p.waveform = Waveform::sine;
  else if (w == "sawtooth") p.waveform = Waveform::sawtooth;
  else if (w == "square") p.waveform = Waveform::square;
  else if (w == "triangle") p.waveform = Waveform::triangle;
  else invalid(r.path("waveform"), "unknown waveform \"" + w + "\"");
  if (const Json* a = r.find("adsr")) {
    ObjectReader ar(*a, r.path("adsr"));
    p.adsr.attack = ar.get("attack", p.adsr.attack);
    p.adsr.decay = ar.get("decay", p.adsr.decay);
    p.adsr.sustain = ar.get("sustain", p.adsr.sustain);
    p.adsr.release = ar.get("release", p.adsr.release);
    ar.finish();
  }
  p.detune_cents = r.get("detune_cents", p.detune_cents);
  if (const Json* v = r.find("vibrato")) {
    ObjectReader vr(*v, r.path("vibrato"));
    p.vibrato.rate_hz = vr.get("rate_hz", 0.0);
    p.vibrato.depth_cents = vr.get("depth_cents", 0.0);
    vr.finish();
  }
  if (const Json* g = r.find("gain_db")) {
    if (g->is_string() && g->get<std::string>() == "-inf") p.gain_db = -std::numeric_limits<double>::infinity();
    else if (g->is_number()) p.gain_db = g->get<double>();
    else invalid(r.path("gain_db"), "expected a number or \"-inf\"");
  }
  r.finish();
  checked(where, [&] { p.validate(); });
  return p;
}

Json to_json(const Patch& p) {
  static const char* names[] = {"sine", "sawtooth", "square", "triangle"};
  Json gain = std::isfinite(p.gain_db) ? Json(p.gain_db) : Json("-inf");
  return {{"waveform", names[static_cast<int>(p.waveform)]},
          {"adsr", {{"attack", p.adsr.attack}, {"decay", p.adsr.decay}, {"sustain", p.adsr.sustain}, {"release", p.adsr.release}}},
          {"detune_cents", p.detune_cents},
          {"vibrato", {{"rate_hz", p.vibrato.rate_hz}, {"depth_cents", p.vibrato.depth_cents}}},
          {"gain_db", gain}};
}

PatchBank patch_bank_from_json(const Json& j, const std::string& where) {
  expect_object(j, where);
  PatchBank bank;
  for (const auto& [name, list] : j.items()) {
    const std::string at = where + "." + name;
    if (!list.is_array() || list.empty()) invalid(at, "expected a non-empty array of patches");
    auto& patches = bank.instruments[name];
    for (std::size_t i = 0; i < list.size(); ++i) patches.push_back(patch_from_json(list[i], at + "[" + std::to_string(i) + "]"));
  }
  return bank;
}

MaskNetConfig model_from_json(const Json& j, const std::string& where, int input_bins) {
  ObjectReader r(j, where);
  MaskNetConfig c;
  c.input_bins = input_bins;
  c.recurrent_layers = r.get("recurrent_layers", c.recurrent_layers);
  c.hidden_units = r.get("hidden_units", c.hidden_units);
  c.bidirectional = r.get("bidirectional", c.bidirectional);
  c.dropout = r.get("dropout", c.dropout);
  r.finish();
  checked(where, [&] { c.validate(); });
  return c;
}

Json to_json(const MaskNetConfig& c) {
  return {{"input_bins", c.input_bins},
          {"recurrent_layers", c.recurrent_layers},
          {"hidden_units", c.hidden_units},
          {"bidirectional", c.bidirectional},
          {"dropout", c.dropout}};
}

TrainConfig train_from_json(const Json& j, const std::string& where) {
  ObjectReader r(j, where);
  TrainConfig c;
  c.steps = r.get("steps", c.steps);
  c.batch_size = r.get("batch_size", c.batch_size);
  c.learning_rate = r.get("learning_rate", c.learning_rate);
  c.grad_clip_norm = r.get("grad_clip_norm", c.grad_clip_norm);
  c.beta1 = r.get("beta1", c.beta1);
  c.beta2 = r.get("beta2", c.beta2);
  c.epsilon = r.get("epsilon", c.epsilon);
  c.checkpoint_every = r.get("checkpoint_every", c.checkpoint_every);
  r.finish();
  checked(where, [&] { c.validate(); });
  return c;
}

Json to_json(const TrainConfig& c) {
  return {{"steps", c.steps},           {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
          {"grad_clip_norm", c.grad_clip_norm}, {"beta1", c.beta1}, {"beta2", c.beta2},
          {"epsilon", c.epsilon},       {"checkpoint_every", c.checkpoint_every}};
}

AugmentRanges ranges_from_json(const Json& j, const std::string& where) {
  ObjectReader r(j, where);
  AugmentRanges a;
  a.gain_min_db = r.get("gain_min_db", a.gain_min_db);
  a.gain_max_db = r.get("gain_max_db", a.gain_max_db);
  if (const Json* g = r.find("gain_db")) {
    if (!g->is_array() || g->size() != 2 || !(*g)[0].is_number() || !(*g)[1].is_number())
      invalid(r.path("gain_db"), "expected [min, max]");
    a.gain_min_db = (*g)[0].get<double>();
    a.gain_max_db = (*g)[1].get<double>();
  }
  a.ratios = r.get("ratios", a.ratios);
  a.time_scale_min = r.get("time_scale_min", a.time_scale_min);
  a.time_scale_max = r.get("time_scale_max", a.time_scale_max);
  r.finish();
  return a;
}

Json to_json(const AugmentRanges& r) {
  return {{"gain_min_db", r.gain_min_db},
          {"gain_max_db", r.gain_max_db},
          {"ratios", r.ratios},
          {"time_scale_min", r.time_scale_min},
          {"time_scale_max", r.time_scale_max}};
}

CompressorParams compressor_from_json(const Json& j, const std::string& where) {
  ObjectReader r(j, where);
  CompressorParams c;
  c.threshold_db = r.get("threshold_db", c.threshold_db);
  c.attack = r.get("attack", c.attack);
  c.release = r.get("release", c.release);
  c.makeup_db = r.get("makeup_db", c.makeup_db);
  r.finish();
  checked(where, [&] { c.validate(); });
  return c;
}

Json to_json(const CompressorParams& c) {
  return {{"threshold_db", c.threshold_db}, {"attack", c.attack}, {"release", c.release}, {"makeup_db", c.makeup_db}};
}

ChunkSpec chunk_from_json(const Json& j, const std::string& where) {
  ObjectReader r(j, where);
  ChunkSpec c;
  c.length = r.get("chunk_s", c.length);
  c.overlap = r.get("overlap_s", c.overlap);
  r.finish();
  if (!(c.length > 0 && c.overlap >= 0 && c.overlap < c.length))
    invalid(where, "need chunk_s > 0 and 0 <= overlap_s < chunk_s");
  return c;
}

Json to_json(const ChunkSpec& c) { return {{"chunk_s", c.length}, {"overlap_s", c.overlap}}; }

const char* to_string(BackgroundStrategy s) {
  return s == BackgroundStrategy::original_mixture ? "original_mixture" : "synthesized_accompaniment";
}

BackgroundStrategy strategy_from_string(const std::string& s, const std::string& where) {
  if (s == "original_mixture") return BackgroundStrategy::original_mixture;
  if (s == "synthesized_accompaniment") return BackgroundStrategy::synthesized_accompaniment;
  invalid(where, "unknown background strategy \"" + s + "\" (original_mixture | synthesized_accompaniment)");
}

ProjectConfig parse_project_config(const std::string& text, const fs::path& base_dir, const ConfigOptions& options) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("config: malformed JSON: ") + e.what(), e.byte);
  }
  ObjectReader r(root, "config");
  ProjectConfig c;
  c.sample_rate = r.get("sample_rate", c.sample_rate);
  if (const Json* s = r.find("stft")) c.stft = stft_from_json(*s, "config.stft");
  if (const Json* p = r.find("patches")) c.patches = patch_bank_from_json(*p, "config.patches");
  c.midi = resolve(base_dir, r.required<std::string>("midi"));
  c.mixture = resolve(base_dir, r.required<std::string>("mixture"));
  c.target = r.required<std::string>("target");
  c.target_instrument = r.required<std::string>("target_instrument");
  c.background = strategy_from_string(r.get<std::string>("background", "original_mixture"), "config.background");
  if (const Json* a = r.find("accompaniment")) {
    expect_object(*a, "config.accompaniment");
    for (const auto& [track, instrument] : a->items()) {
      if (!instrument.is_string()) invalid("config.accompaniment." + track, "expected an instrument name");
      c.accompaniment[track] = instrument.get<std::string>();
    }
  }
  c.background_variants = r.get("background_variants", c.background_variants);
  if (const Json* a = r.find("augment")) {
    ObjectReader ar(*a, "config.augment");
    if (const Json* g = ar.find("ranges")) c.ranges = ranges_from_json(*g, "config.augment.ranges");
    c.excerpt = ar.get("excerpt_s", c.excerpt);
    if (const Json* k = ar.find("compressor")) c.compressor = compressor_from_json(*k, "config.augment.compressor");
    ar.finish();
  }
  const Json* model = r.find("model");
  c.model = model_from_json(model ? *model : Json::object(), "config.model", c.stft.bins());
  if (const Json* t = r.find("train")) c.train = train_from_json(*t, "config.train");
  if (const Json* s = r.find("separate")) c.chunk = chunk_from_json(*s, "config.separate");
  if (const Json* o = r.find("output_dir")) {
    if (!o->is_string()) invalid("config.output_dir", "expected a string");
    c.output_dir = resolve(base_dir, o->get<std::string>());
  }
  c.seed = r.get<std::uint64_t>("seed", 0);
  r.finish();
  c.train.seed = c.seed;
  validate(c, options);
  return c;
}

ProjectConfig load_project_config(const fs::path& path, const ConfigOptions& options) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  return parse_project_config(std::string(bytes.begin(), bytes.end()), fs::absolute(path).parent_path(), options);
}

void validate(const ProjectConfig& c, const ConfigOptions& options) {
  if (c.sample_rate < 4000 || c.sample_rate > 192000) invalid("config.sample_rate", "must lie in [4000, 192000]");
  checked("config.stft", [&] { c.stft.validate(); });
  checked("config.patches", [&] { c.patches.validate(); });
  if (!c.patches.instruments.count(c.target_instrument))
    invalid("config.target_instrument", "\"" + c.target_instrument + "\" is not in the patch bank");
  if (c.target.empty()) invalid("config.target", "empty track selector");
  if (c.background == BackgroundStrategy::synthesized_accompaniment) {
    for (const auto& [track, instrument] : c.accompaniment)
      if (!c.patches.instruments.count(instrument))
        invalid("config.accompaniment." + track, "\"" + instrument + "\" is not in the patch bank");
  }
  if (c.background_variants < 1 || c.background_variants > 64) invalid("config.background_variants", "must lie in [1, 64]");
  RangeLimits{options.allow_wide_ranges}.check(c.ranges, "config.augment.ranges");
  checked("config.augment.compressor", [&] { c.compressor.validate(); });
  if (!(c.excerpt > 0 && c.excerpt <= 600)) invalid("config.augment.excerpt_s", "must lie in (0, 600]");
  checked("config.model", [&] { c.model.validate(); });
  if (c.model.input_bins != c.stft.bins()) invalid("config.model", "input bins must equal the STFT bin count");
  checked("config.train", [&] { c.train.validate(); });
  if (options.check_paths) {
    if (!fs::is_regular_file(c.midi)) invalid("config.midi", "file not found: " + c.midi.string());
    if (!fs::is_regular_file(c.mixture)) invalid("config.mixture", "file not found: " + c.mixture.string());
  }
}

Json to_json(const ProjectConfig& c) {
  Json patches = Json::object();
  for (const auto& [name, list] : c.patches.instruments) {
    Json arr = Json::array();
    for (const Patch& p : list) arr.push_back(to_json(p));
    patches[name] = arr;
  }
  Json j = {{"sample_rate", c.sample_rate},
            {"stft", to_json(c.stft)},
            {"patches", patches},
            {"midi", c.midi.string()},
            {"mixture", c.mixture.string()},
            {"target", c.target},
            {"target_instrument", c.target_instrument},
            {"background", to_string(c.background)},
            {"accompaniment", c.accompaniment},
            {"background_variants", c.background_variants},
            {"augment", {{"ranges", to_json(c.ranges)}, {"excerpt_s", c.excerpt}, {"compressor", to_json(c.compressor)}}},
            {"model", to_json(c.model)},
            {"train", to_json(c.train)},
            {"separate", to_json(c.chunk)},
            {"seed", c.seed}};
  j["model"].erase("input_bins");  // derived from the STFT
  if (!c.output_dir.empty()) j["output_dir"] = c.output_dir.string();
  return j;
}

}  // namespace bespoke
