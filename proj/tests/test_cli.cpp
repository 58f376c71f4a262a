#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const std::string kCli = NVTHERM_CLI_PATH;
const std::string kScenarios = SCENARIO_DIR;

int run_shell(const std::string& command) {
  const int status = std::system(command.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

int run_cli(const std::string& args, const std::string& log = "cli_out/log.txt") {
  return run_shell("\"" + kCli + "\" " + args + " > " + log + " 2>&1");
}

std::string quick() { return "\"" + kScenarios + "/quick.toml\""; }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Manifests record the wall-clock timestamp and the worker count; neither is
// data, so strip them before comparing runs.
std::string normalize_manifest(const std::string& text) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find("generated_utc") != std::string::npos) continue;
    if (line.find("\"threads\"") != std::string::npos) continue;
    out << line << '\n';
  }
  return out.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::string body = read_file(entry.path());
    if (entry.path().filename().string().find("manifest") != std::string::npos) {
      body = normalize_manifest(body);
    }
    files[entry.path().filename().string()] = std::move(body);
  }
  REQUIRE(!files.empty());
  return files;
}

}  // namespace

TEST_CASE("every subcommand is byte-stable across reruns and thread counts") {
  fs::remove_all("cli_out");
  fs::create_directories("cli_out");
  const std::vector<std::string> commands{"demag",  "odmr",   "fid",         "cooling",
                                          "track",  "heater", "sensitivity", "calibrate"};
  for (const auto& cmd : commands) {
    CAPTURE(cmd);
    const std::string a = "cli_out/" + cmd + "_a";
    const std::string b = "cli_out/" + cmd + "_b";
    const std::string c = "cli_out/" + cmd + "_c";
    REQUIRE(run_cli("--config " + quick() + " --out " + a + " " + cmd) == 0);
    REQUIRE(run_cli("--config " + quick() + " --out " + b + " " + cmd) == 0);
    REQUIRE(run_cli("--config " + quick() + " --threads 4 --out " + c + " " + cmd) == 0);
    const auto sa = snapshot(a);
    CHECK(sa == snapshot(b));
    CHECK(sa == snapshot(c));
  }
  fs::remove_all("cli_out");
}

TEST_CASE("the file list lands on stdout") {
  fs::remove_all("cli_out");
  fs::create_directories("cli_out");
  REQUIRE(run_cli("--config " + quick() + " --out cli_out/fid fid", "cli_out/stdout.txt") == 0);
  const std::string out = read_file("cli_out/stdout.txt");
  CHECK(out.find("fid_signal.csv") != std::string::npos);
  CHECK(out.find("fid_manifest.json") != std::string::npos);
  fs::remove_all("cli_out");
}

TEST_CASE("seed and shot overrides change the data") {
  fs::remove_all("cli_out");
  fs::create_directories("cli_out");
  REQUIRE(run_cli("--config " + quick() + " --out cli_out/s1 fid") == 0);
  REQUIRE(run_cli("--config " + quick() + " --seed 999 --out cli_out/s2 fid") == 0);
  CHECK(read_file("cli_out/s1/fid_signal.csv") != read_file("cli_out/s2/fid_signal.csv"));

  REQUIRE(run_cli("--config " + quick() + " --shots 40000 --out cli_out/s3 fid") == 0);
  CHECK(read_file("cli_out/s3/fid_manifest.json").find("40000") != std::string::npos);
  fs::remove_all("cli_out");
}

TEST_CASE("the output directory falls back to the environment") {
  fs::remove_all("cli_out");
  fs::create_directories("cli_out");
  REQUIRE(run_shell("NVTHERM_OUT=cli_out/envdir \"" + kCli + "\" --config " + quick() +
                    " sensitivity > cli_out/log.txt 2>&1") == 0);
  CHECK(fs::exists("cli_out/envdir/sensitivity_report.json"));
  fs::remove_all("cli_out");
}

TEST_CASE("usage errors exit with status 2") {
  fs::remove_all("cli_out");
  fs::create_directories("cli_out");
  CHECK(run_cli("--config /no/such/file.toml fid") == 2);
  CHECK(run_cli("--config " + quick() + " frobnicate") == 2);
  CHECK(run_cli("--config " + quick() + " --nope fid") == 2);
  CHECK(run_cli("") == 2);

  std::ofstream bad("cli_out/bad.toml");
  bad << "[scene]\nshots = -1\n";
  bad.close();
  CHECK(run_cli("--config cli_out/bad.toml fid") == 2);
  fs::remove_all("cli_out");
}

TEST_CASE("numeric failures exit with status 3") {
  fs::remove_all("cli_out");
  fs::create_directories("cli_out");
  // tracker wait parked on a fringe node has no responsivity to invert
  std::ofstream cfg("cli_out/node.toml");
  cfg << "[tracker]\ntau_us = 0.185185185\nduration_s = 1.0\n";
  cfg.close();
  CHECK(run_cli("--config cli_out/node.toml --out cli_out/node track") == 3);
  fs::remove_all("cli_out");
}
