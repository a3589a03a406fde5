#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "bespoke/config.hpp"
#include "bespoke/error.hpp"
#include "support.hpp"

using namespace bespoke;

namespace {

const std::filesystem::path kQuickstart = BESPOKE_DATA_DIR "/quickstart";

Json base() {
  std::ifstream in(kQuickstart / "config.json");
  return Json::parse(in);
}

ProjectConfig parse(const Json& j, ConfigOptions opt = {}) {
  opt.check_paths = false;
  return parse_project_config(j.dump(), "/base", opt);
}

Errc code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no bespoke::Error thrown";
  return Errc::runtime;
}

}  // namespace

TEST(Config, QuickstartLoadsWithDefaults) {
  const auto c = load_project_config(kQuickstart / "config.json");
  EXPECT_EQ(c.sample_rate, 16000);
  EXPECT_TRUE(c.midi.is_absolute());
  EXPECT_TRUE(std::filesystem::equivalent(c.midi, kQuickstart / "song.mid"));
  EXPECT_EQ(c.background, BackgroundStrategy::synthesized_accompaniment);
  EXPECT_EQ(c.patches.instruments.at("lead").size(), 2u);
  EXPECT_EQ(c.train.steps, 200);
  EXPECT_EQ(c.train.seed, 7u);
  EXPECT_EQ(c.train.batch_size, 4);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 1e-3);
  EXPECT_EQ(c.model.hidden_units, 300);
  EXPECT_EQ(c.model.recurrent_layers, 2);
  EXPECT_DOUBLE_EQ(c.model.dropout, 0.3);
  EXPECT_EQ(c.model.input_bins, 513);
  EXPECT_DOUBLE_EQ(c.ranges.gain_min_db, -12);
  EXPECT_DOUBLE_EQ(c.ranges.gain_max_db, 6);
  EXPECT_EQ(c.ranges.ratios, (std::vector<double>{2, 4, 8, 12, 16, 20}));
  EXPECT_DOUBLE_EQ(c.compressor.threshold_db, -20);
  EXPECT_DOUBLE_EQ(c.excerpt, 2.0);
}

TEST(Config, RelativePathsResolveAgainstBase) {
  const auto c = parse(base());
  EXPECT_EQ(c.midi, std::filesystem::path("/base/song.mid"));
  EXPECT_EQ(c.mixture, std::filesystem::path("/base/mixture.wav"));
}

TEST(Config, UnknownKeysRejectedAtEveryLevel) {
  for (auto edit : std::vector<std::function<void(Json&)>>{
           [](Json& j) { j["learning_rate"] = 0.1; },
           [](Json& j) { j["train"]["lr"] = 0.1; },
           [](Json& j) { j["augment"]["gain"] = 1; },
           [](Json& j) { j["patches"]["lead"][0]["wave"] = "sine"; },
           [](Json& j) { j["patches"]["lead"][0]["adsr"]["hold"] = 0.1; },
           [](Json& j) { j["model"] = {{"layers", 3}}; },
       }) {
    Json j = base();
    edit(j);
    EXPECT_EQ(code_of([&] { parse(j); }), Errc::validation) << j.dump();
  }
}

TEST(Config, UnknownKeyMessageNamesThePath) {
  Json j = base();
  j["train"]["stpes"] = 5;
  try {
    parse(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("stpes"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("train"), std::string::npos);
  }
}

TEST(Config, GainRangeOutsideSchemaNeedsOverride) {
  Json j = base();
  j["augment"]["ranges"] = {{"gain_db", {-20, 10}}};
  EXPECT_EQ(code_of([&] { parse(j); }), Errc::validation);
  const auto wide = parse(j, {.allow_wide_ranges = true});
  EXPECT_DOUBLE_EQ(wide.ranges.gain_min_db, -20);
  EXPECT_DOUBLE_EQ(wide.ranges.gain_max_db, 10);

  j["augment"]["ranges"] = {{"gain_db", {-80, 10}}};
  EXPECT_EQ(code_of([&] { parse(j, {.allow_wide_ranges = true}); }), Errc::validation);
}

TEST(Config, OtherRangeBounds) {
  Json j = base();
  j["augment"]["ranges"] = {{"ratios", {2, 40}}};
  EXPECT_EQ(code_of([&] { parse(j); }), Errc::validation);
  EXPECT_NO_THROW(parse(j, {.allow_wide_ranges = true}));
  j["augment"]["ranges"] = {{"time_scale_min", 0.7}};
  EXPECT_EQ(code_of([&] { parse(j); }), Errc::validation);
  j["augment"]["ranges"] = {{"gain_db", {-6, 3}}};
  EXPECT_DOUBLE_EQ(parse(j).ranges.gain_min_db, -6);
}

TEST(Config, TypeAndValueErrors) {
  for (auto edit : std::vector<std::function<void(Json&)>>{
           [](Json& j) { j["train"]["steps"] = "many"; },
           [](Json& j) { j["train"]["steps"] = 0; },
           [](Json& j) { j["sample_rate"] = -1; },
           [](Json& j) { j["stft"] = {{"hop_length", 768}}; },
           [](Json& j) { j["background"] = "mystery"; },
           [](Json& j) { j.erase("midi"); },
           [](Json& j) { j["patches"]["lead"] = Json::array(); },
           [](Json& j) { j["target_instrument"] = "violin"; },
           [](Json& j) { j["augment"]["compressor"] = {{"attack", 0}}; },
       }) {
    Json j = base();
    edit(j);
    EXPECT_EQ(code_of([&] { parse(j); }), Errc::validation) << j.dump();
  }
}

TEST(Config, MalformedJsonIsParseError) {
  EXPECT_EQ(code_of([] { parse_project_config("{\"midi\": ", "/"); }), Errc::parse);
}

TEST(Config, MissingFilesFailValidation) {
  testing_support::TempDir dir;
  {
    std::ofstream out(dir / "c.json");
    out << base().dump();
  }
  EXPECT_EQ(code_of([&] { load_project_config(dir / "c.json"); }), Errc::validation);
  EXPECT_EQ(code_of([&] { load_project_config(dir / "none.json"); }), Errc::io);
}

TEST(Config, CanonicalJsonRoundTrips) {
  const auto c = parse(base());
  const Json canon = to_json(c);
  const auto again = parse_project_config(canon.dump(), "/elsewhere", {.check_paths = false});
  EXPECT_EQ(to_json(again), canon);
}
