#include "nvtherm.h"

#include <exception>
#include <string>
#include <utility>

#include "nvtherm/config.hpp"
#include "nvtherm/errors.hpp"
#include "nvtherm/fitters.hpp"
#include "nvtherm/magnet.hpp"
#include "nvtherm/nvspin.hpp"
#include "nvtherm/runner.hpp"
#include "nvtherm/scene.hpp"
#include "nvtherm/version.hpp"

struct nvt_scene {
  nvtherm::config::Config cfg;
  nvtherm::scene::Scene sc;
  std::string last_files;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return NVT_OK;
  } catch (const nvtherm::Error& e) {
    g_last_error = e.what();
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return NVT_ERR_NUMERIC;
  }
}

int require(bool ok, const char* msg) {
  if (ok) return NVT_OK;
  g_last_error = msg;
  return NVT_ERR_INVALID;
}

int load_config(nvtherm::config::Config cfg, nvt_scene** out) {
  auto scene = nvtherm::scene::build_scene(cfg);
  *out = new nvt_scene{std::move(cfg), std::move(scene), {}};
  return NVT_OK;
}

}  // namespace

extern "C" {

const char* nvt_version(void) { return nvtherm::kVersion; }

const char* nvt_last_error(void) { return g_last_error.c_str(); }

int nvt_scene_load(const char* path, nvt_scene** out) {
  if (int rc = require(path && out, "nvt_scene_load: null argument")) return rc;
  *out = nullptr;
  return guarded([&] { load_config(nvtherm::config::Config::from_file(path), out); });
}

int nvt_scene_load_string(const char* text, nvt_scene** out) {
  if (int rc = require(text && out, "nvt_scene_load_string: null argument")) return rc;
  *out = nullptr;
  return guarded(
      [&] { load_config(nvtherm::config::Config::from_string(text), out); });
}

void nvt_scene_free(nvt_scene* scene) { delete scene; }

int nvt_scene_set_seed(nvt_scene* scene, uint64_t seed) {
  if (int rc = require(scene != nullptr, "nvt_scene_set_seed: null scene")) return rc;
  scene->sc.master_seed = seed;
  g_last_error.clear();
  return NVT_OK;
}

int nvt_scene_set_shots(nvt_scene* scene, long long shots) {
  if (int rc = require(scene != nullptr, "nvt_scene_set_shots: null scene")) return rc;
  if (int rc = require(shots > 0, "nvt_scene_set_shots: shots must be > 0")) return rc;
  scene->sc.shots = shots;
  g_last_error.clear();
  return NVT_OK;
}

int nvt_scene_set_threads(nvt_scene* scene, int threads) {
  if (int rc = require(scene != nullptr, "nvt_scene_set_threads: null scene")) return rc;
  if (int rc = require(threads > 0, "nvt_scene_set_threads: threads must be > 0")) {
    return rc;
  }
  scene->sc.threads = threads;
  g_last_error.clear();
  return NVT_OK;
}

int nvt_run(nvt_scene* scene, const char* command, const char* out_dir) {
  if (int rc = require(scene && command && out_dir, "nvt_run: null argument")) {
    return rc;
  }
  return guarded([&] {
    const auto files = nvtherm::runner::run(command, scene->cfg, scene->sc, out_dir);
    std::string joined;
    for (const auto& f : files) {
      if (!joined.empty()) joined += '\n';
      joined += f;
    }
    scene->last_files = std::move(joined);
  });
}

const char* nvt_run_files(const nvt_scene* scene) {
  return scene ? scene->last_files.c_str() : "";
}

int nvt_magnetization(const nvt_scene* scene, double t_K, double* m) {
  if (int rc = require(scene && m, "nvt_magnetization: null argument")) return rc;
  return guarded([&] {
    *m = nvtherm::magnet::solve_magnetization(t_K, nvtherm::norm(scene->sc.b_ext_G),
                                              scene->sc.mnp)
             .m;
  });
}

int nvt_transitions(const nvt_scene* scene, double t_K, double* f_minus_MHz,
                    double* f_plus_MHz) {
  if (int rc = require(scene && f_minus_MHz && f_plus_MHz,
                       "nvt_transitions: null argument")) {
    return rc;
  }
  return guarded([&] {
    const auto pair = scene->sc.transitions_at(t_K);
    *f_minus_MHz = pair.f_minus_MHz;
    *f_plus_MHz = pair.f_plus_MHz;
  });
}

int nvt_susceptibility(const nvt_scene* scene, double t_K, double* dfdT_MHz_per_K) {
  if (int rc = require(scene && dfdT_MHz_per_K, "nvt_susceptibility: null argument")) {
    return rc;
  }
  return guarded([&] { *dfdT_MHz_per_K = scene->sc.dfdT_at(t_K); });
}

int nvt_fid_signal(const nvt_scene* scene, double tau_us, double delta_f_MHz,
                   double* s) {
  if (int rc = require(scene && s, "nvt_fid_signal: null argument")) return rc;
  return guarded(
      [&] { *s = nvtherm::nvspin::fid_signal(tau_us, delta_f_MHz, scene->sc.nv); });
}

int nvt_sensitivity(const nvt_scene* scene, double* eta_K_per_sqrtHz,
                    double* t_optimal_us) {
  if (int rc = require(scene && eta_K_per_sqrtHz && t_optimal_us,
                       "nvt_sensitivity: null argument")) {
    return rc;
  }
  return guarded([&] {
    const auto& sc = scene->sc;
    const double dfdT = std::abs(sc.dfdT_at(sc.tracker.t_ref_K));
    const auto rep = nvtherm::fitters::estimate_sensitivity(
        sc.nv.contrast, sc.nv.t2_star_us, sc.nv.nu, sc.tracker.delta_f_MHz,
        sc.effective_rate_cps(), dfdT);
    *eta_K_per_sqrtHz = rep.eta_K_per_sqrtHz;
    *t_optimal_us = rep.t_optimal_us;
  });
}

}  // extern "C"
