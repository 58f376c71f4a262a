#include <algorithm>
#include <string>

#include "doctest.h"
#include "nvtherm/config.hpp"
#include "nvtherm/errors.hpp"

using nvtherm::ConfigError;
using nvtherm::config::Config;

TEST_CASE("tables, scalars and arrays parse into dotted keys") {
  const auto cfg = Config::from_string(R"(
# whole-line comment
top = 1.5
name = "probe A"   # trailing comment
flag = true

[scene]
seed = 42
shots = 1e6

[magnet.calibration]
target_dfdT_MHz_per_K = 47.0

[field]
b_ext_G = [0.0, 0.0, 192.0]
)");
  CHECK(cfg.require_number("top") == 1.5);
  CHECK(cfg.require_string("name") == "probe A");
  CHECK(cfg.boolean_or("flag", false));
  CHECK(cfg.require_number("scene.seed") == 42.0);
  CHECK(cfg.require_number("scene.shots") == 1e6);
  CHECK(cfg.require_number("magnet.calibration.target_dfdT_MHz_per_K") == 47.0);
  const auto b = cfg.require_numbers("field.b_ext_G");
  REQUIRE(b.size() == 3);
  CHECK(b[2] == 192.0);
  const auto v = cfg.vec3_or("field.b_ext_G", {});
  CHECK(v.z == 192.0);
}

TEST_CASE("canonical dump round-trips exactly") {
  const auto cfg = Config::from_string(R"(
[b]
y = 2.5
x = "hi there"
[a]
z = [1, 2.25, -3e-2]
w = false
)");
  const std::string dump1 = cfg.dump();
  const auto reparsed = Config::from_string(dump1);
  CHECK(reparsed.dump() == dump1);
  CHECK(reparsed.hash() == cfg.hash());
}

TEST_CASE("hash ignores key order and table layout") {
  const auto a = Config::from_string("[s]\nx = 1\ny = 2\n");
  const auto b = Config::from_string("[s]\ny = 2\nx = 1\n");
  const auto c = Config::from_string("s.x = 1\ns.y = 2\n");
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() == c.hash());

  const auto d = Config::from_string("[s]\nx = 1\ny = 3\n");
  CHECK(a.hash() != d.hash());
}

TEST_CASE("missing and mistyped keys fail naming the key") {
  const auto cfg = Config::from_string("x = 1\nname = \"n\"\n");
  CHECK(cfg.number_or("absent", 7.0) == 7.0);
  CHECK_THROWS_AS((void)cfg.require_number("absent"), ConfigError);
  CHECK_THROWS_AS((void)cfg.require_string("x"), ConfigError);
  CHECK_THROWS_AS((void)cfg.require_number("name"), ConfigError);
  try {
    (void)cfg.require_number("absent");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("absent") != std::string::npos);
  }
}

TEST_CASE("parse errors carry origin and line number") {
  try {
    Config::from_string("x = 1\noops\n", "bad.toml");
    FAIL("expected a parse error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bad.toml") != std::string::npos);
    CHECK(msg.find("2") != std::string::npos);
  }
  CHECK_THROWS_AS(Config::from_string("x = 1\nx = 2\n"), ConfigError);
  CHECK_THROWS_AS(Config::from_string("x = \n"), ConfigError);
  CHECK_THROWS_AS(Config::from_string("[table\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(Config::from_string("x = 12abc\n"), ConfigError);
}

TEST_CASE("missing file errors mention the path") {
  try {
    Config::from_file("/nonexistent/nvtherm.toml");
    FAIL("expected a file error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/nvtherm.toml") != std::string::npos);
  }
}

TEST_CASE("string escapes and quoted hashes survive") {
  const auto cfg = Config::from_string(R"(a = "line\nbreak"
b = "has # inside"
)");
  CHECK(cfg.require_string("a") == "line\nbreak");
  CHECK(cfg.require_string("b") == "has # inside");
  const auto round = Config::from_string(cfg.dump());
  CHECK(round.require_string("a") == "line\nbreak");
}

TEST_CASE("immediate child tables are discoverable") {
  const auto cfg = Config::from_string(R"(
[magnet]
m_sat_Am2 = 1e-14
[magnet.calibration]
t_peak_K = 311.0
[nv]
contrast = 0.27
)");
  const auto top = cfg.tables_under("");
  CHECK(std::find(top.begin(), top.end(), "magnet") != top.end());
  CHECK(std::find(top.begin(), top.end(), "nv") != top.end());
  const auto under = cfg.tables_under("magnet");
  REQUIRE(under.size() == 1);
  CHECK(under[0] == "calibration");
}

TEST_CASE("programmatic overrides feed back into dump and hash") {
  auto cfg = Config::from_string("scene.seed = 1\n");
  const auto h0 = cfg.hash();
  cfg.set_number("scene.seed", 2.0);
  cfg.set_string("scene.label", "run B");
  CHECK(cfg.require_number("scene.seed") == 2.0);
  CHECK(cfg.require_string("scene.label") == "run B");
  CHECK(cfg.hash() != h0);
}
