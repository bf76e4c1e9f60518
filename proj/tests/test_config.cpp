#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cae/config.hpp"

using namespace cae;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return load_config(in, "test");
}

}  // namespace

TEST(Config, EveryPresetRoundTripsThroughText) {
  for (const auto& name : preset_names()) {
    const auto p = preset(name);
    ASSERT_TRUE(p.has_value()) << name;
    EXPECT_NO_THROW(validate(*p)) << name;
    const auto text = to_text(*p);
    const auto back = parse(text);
    EXPECT_EQ(to_key_values(back), to_key_values(*p)) << name;
    EXPECT_EQ(to_text(back), text) << name;
  }
}

TEST(Config, UnknownPresetIsEmpty) { EXPECT_FALSE(preset("no-such-env").has_value()); }

TEST(Config, PresetNamesMatchEnvName) {
  for (const auto& name : preset_names()) EXPECT_EQ(preset(name)->env.name, name);
}

TEST(Config, OverridesOnTopOfPreset) {
  const auto c = parse("env.name = frozen-lake\ntrain.lr = 0.5\ntrain.variant = q  # comment\n\n");
  EXPECT_DOUBLE_EQ(c.train.lr, 0.5);
  EXPECT_EQ(c.train.variant, Variant::q);
  EXPECT_EQ(c.train.hidden, (std::vector<std::size_t>{60, 40}));
}

TEST(Config, RejectsUnknownKey) {
  EXPECT_THROW(parse("env.name = line-world\ntrain.learning_rate = 1\n"), ConfigError);
  EXPECT_THROW(parse("env.name = line-world\nenv.goals.extreme = 1,0\n"), ConfigError);
}

TEST(Config, RejectsDuplicateKeyWithLineNumbers) {
  try {
    parse("env.name = line-world\ntrain.lr = 1\ntrain.lr = 2\n");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("test:3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  }
}

TEST(Config, RejectsMalformedLinesAndValues) {
  EXPECT_THROW(parse("env.name = line-world\njust words\n"), ConfigError);
  EXPECT_THROW(parse("env.name = line-world\ntrain.lr = fast\n"), ConfigError);
  EXPECT_THROW(parse("env.name = line-world\ntrain.lr = -1\n"), ConfigError);
  EXPECT_THROW(parse("env.name = line-world\ntrain.n_gd = 2.5\n"), ConfigError);
  EXPECT_THROW(parse("env.name = line-world\ntrain.clip = maybe\n"), ConfigError);
  EXPECT_THROW(parse("env.name = line-world\ntrain.optimizer = rmsprop\n"), ConfigError);
  EXPECT_THROW(parse("train.lr = 1\n"), ConfigError);  // no env.name
}

TEST(Config, RejectsInvalidCombinations) {
  EXPECT_THROW(parse("env.name = dubins\ntrain.backend = tabular\n"), ConfigError);
  EXPECT_THROW(parse("env.name = mini-maze\nenv.goals.easy = 0,2\n"), ConfigError);  // wall cell
  EXPECT_THROW(parse("env.name = line-world\neval.horizon = 11\n"), ConfigError);
  EXPECT_THROW(parse("env.name = line-world\ntrain.variant = d\neval.horizon = 3\n"), ConfigError);
  EXPECT_THROW(parse("env.name = frozen-lake\ntrain.optimizer = average\n"), ConfigError);
}

TEST(Config, CustomGridNeedsKind) {
  EXPECT_THROW(parse("env.name = my-grid\n"), ConfigError);
  const auto c = parse(
      "env.name = my-grid\nenv.kind = grid\nenv.width = 4\nenv.height = 2\nenv.holes = 3,1\n"
      "env.start = 0,0\nenv.train_start = point\nenv.goals.all = *\n");
  EXPECT_EQ(c.env.grid.width, 4);
  EXPECT_EQ(c.env.grid.holes, (std::vector<Cell>{{3, 1}}));
  EXPECT_EQ(c.env.name, "my-grid");
}

TEST(Config, ShippedFilesMatchPresets) {
  namespace fs = std::filesystem;
  int seen = 0;
  for (const auto& name : preset_names()) {
    const fs::path path = fs::path("configs") / (name + ".cfg");
    ASSERT_TRUE(fs::exists(path)) << path;
    const auto c = load_config_file(path.string());
    EXPECT_EQ(to_key_values(c), to_key_values(*preset(name))) << name;
    ++seen;
  }
  EXPECT_EQ(seen, static_cast<int>(preset_names().size()));
}

TEST(Config, FormatDoubleIsShortestRoundTrip) {
  for (double v : {0.1, 1e-3, 2.5, 3.0, 1.0 / 3.0, 12345.678}) EXPECT_EQ(std::stod(format_double(v)), v);
  EXPECT_EQ(format_double(0.001), "0.001");
}
