#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "CLI11.hpp"

#include "nvtherm.h"

namespace {

int exit_code_of(int status) {
  switch (status) {
    case NVT_OK:
      return 0;
    case NVT_ERR_CONFIG:
    case NVT_ERR_INVALID:
      return 2;
    default:
      return 3;
  }
}

int fail(int status) {
  std::fprintf(stderr, "error: %s\n", nvt_last_error());
  return exit_code_of(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("nvtherm ") + nvt_version() +
               ": magnetic-particle + spin-defect thermometry simulator"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  long long shots = 0;
  int threads = 0;

  app.add_option("--config", config_path, "scene description file")
      ->required()
      ->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "override the master RNG seed");
  app.add_option("--out", out_dir,
                 "output directory (default: $NVTHERM_OUT, then ./out)");
  auto* shots_opt =
      app.add_option("--shots", shots, "override shots per acquisition point");
  auto* threads_opt =
      app.add_option("--threads", threads, "worker threads for photon sampling");

  app.add_subcommand("demag", "magnetization and line-shift curves vs temperature");
  app.add_subcommand("odmr", "pulsed spectra of both spin transitions");
  app.add_subcommand("fid", "free-induction fringe vs wait time");
  app.add_subcommand("cooling", "laser-heating decay probed by wait-time scans");
  app.add_subcommand("track", "real-time temperature trace at a fixed working point");
  app.add_subcommand("heater", "chopped wire heating with a field-only control");
  app.add_subcommand("sensitivity", "shot-noise sensitivity estimate");
  app.add_subcommand("calibrate", "reference-sensor temperature calibration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (out_dir.empty()) {
    const char* env = std::getenv("NVTHERM_OUT");
    out_dir = (env != nullptr && *env != '\0') ? env : "out";
  }

  nvt_scene* scene = nullptr;
  if (const int rc = nvt_scene_load(config_path.c_str(), &scene); rc != NVT_OK) {
    return fail(rc);
  }
  if (seed_opt->count() > 0) nvt_scene_set_seed(scene, seed);
  if (shots_opt->count() > 0) {
    if (const int rc = nvt_scene_set_shots(scene, shots); rc != NVT_OK) {
      nvt_scene_free(scene);
      return fail(rc);
    }
  }
  if (threads_opt->count() > 0) {
    if (const int rc = nvt_scene_set_threads(scene, threads); rc != NVT_OK) {
      nvt_scene_free(scene);
      return fail(rc);
    }
  }

  const std::string command = app.get_subcommands().front()->get_name();
  if (const int rc = nvt_run(scene, command.c_str(), out_dir.c_str());
      rc != NVT_OK) {
    nvt_scene_free(scene);
    return fail(rc);
  }
  std::printf("%s\n", nvt_run_files(scene));
  nvt_scene_free(scene);
  return 0;
}
