// Release gate: every hard numeric requirement in one binary. Each criterion
// prints exactly one PASS/FAIL line; the exit status is nonzero if any fail.

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nvtherm/config.hpp"
#include "nvtherm/fitters.hpp"
#include "nvtherm/magnet.hpp"
#include "nvtherm/nvspin.hpp"
#include "nvtherm/protocol.hpp"
#include "nvtherm/rng.hpp"
#include "nvtherm/runner.hpp"
#include "nvtherm/scene.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace nvtherm;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool run_criterion(int id, const char* name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  std::printf("%s criterion %2d: %s; %s (%.2f s)\n", out.pass ? "PASS" : "FAIL", id,
              name, out.detail.c_str(), seconds_since(t0));
  std::fflush(stdout);
  return out.pass;
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / (static_cast<double>(v.size()) - 1.0));
}

// Omnibus normality statistic combining the skewness and kurtosis z scores
// (D'Agostino-Pearson); chi-squared with 2 dof under the null, so the 1%
// critical value is 9.21.
double dagostino_k2(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  const double mean = mean_of(x);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  const double g1 = m3 / std::pow(m2, 1.5);
  const double b2 = m4 / (m2 * m2);

  const double y = g1 * std::sqrt((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0)));
  const double beta2 = 3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0) /
                       ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
  const double w2 = -1.0 + std::sqrt(2.0 * (beta2 - 1.0));
  const double delta = 1.0 / std::sqrt(0.5 * std::log(w2));
  const double alpha = std::sqrt(2.0 / (w2 - 1.0));
  const double z1 =
      delta * std::log(y / alpha + std::sqrt(y * y / (alpha * alpha) + 1.0));

  const double eb2 = 3.0 * (n - 1.0) / (n + 1.0);
  const double vb2 = 24.0 * n * (n - 2.0) * (n - 3.0) /
                     ((n + 1.0) * (n + 1.0) * (n + 3.0) * (n + 5.0));
  const double xk = (b2 - eb2) / std::sqrt(vb2);
  const double sb1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0)) *
                     std::sqrt(6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0)));
  const double a =
      6.0 + 8.0 / sb1 * (2.0 / sb1 + std::sqrt(1.0 + 4.0 / (sb1 * sb1)));
  const double z2 = ((1.0 - 2.0 / (9.0 * a)) -
                     std::cbrt((1.0 - 2.0 / a) /
                               (1.0 + xk * std::sqrt(2.0 / (a - 4.0))))) /
                    std::sqrt(2.0 / (9.0 * a));
  return z1 * z1 + z2 * z2;
}

// Closed-form eigenvalues of a 3x3 Hermitian matrix via the trigonometric
// cubic solution; fully independent of the production eigensolver.
std::array<double, 3> cubic_eigenvalues(const nvspin::Hamiltonian& h) {
  using cd = std::complex<double>;
  const auto at = [&](int r, int c) { return h[static_cast<std::size_t>(3 * r + c)]; };
  const double q = std::real(at(0, 0) + at(1, 1) + at(2, 2)) / 3.0;
  const double p1 =
      std::norm(at(0, 1)) + std::norm(at(0, 2)) + std::norm(at(1, 2));
  const double p2 = std::norm(at(0, 0) - q) + std::norm(at(1, 1) - q) +
                    std::norm(at(2, 2) - q) + 2.0 * p1;
  if (p2 < 1e-300) return {q, q, q};
  const double p = std::sqrt(p2 / 6.0);

  std::array<cd, 9> b;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      b[static_cast<std::size_t>(3 * r + c)] =
          (at(r, c) - (r == c ? cd(q) : cd(0.0))) / p;
    }
  }
  const auto bb = [&](int r, int c) { return b[static_cast<std::size_t>(3 * r + c)]; };
  const cd det = bb(0, 0) * (bb(1, 1) * bb(2, 2) - bb(1, 2) * bb(2, 1)) -
                 bb(0, 1) * (bb(1, 0) * bb(2, 2) - bb(1, 2) * bb(2, 0)) +
                 bb(0, 2) * (bb(1, 0) * bb(2, 1) - bb(1, 1) * bb(2, 0));
  const double r = std::clamp(std::real(det) / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;

  std::array<double, 3> eig{q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0),
                            q + 2.0 * p * std::cos(phi - 2.0 * M_PI / 3.0),
                            q + 2.0 * p * std::cos(phi)};
  std::sort(eig.begin(), eig.end());
  return eig;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in.good()) throw std::runtime_error("cannot read " + p.string());
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
  return files;
}

json json_from(const std::vector<std::string>& files, const std::string& suffix) {
  for (const auto& f : files) {
    if (f.size() >= suffix.size() &&
        f.compare(f.size() - suffix.size(), suffix.size(), suffix) == 0) {
      return json::parse(read_file(f));
    }
  }
  throw std::runtime_error("missing output " + suffix);
}

int run_shell(const std::string& command) {
  const int status = std::system(command.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

}  // namespace

int main() {
  const std::string scenario_dir = SCENARIO_DIR;
  const auto cfg = config::Config::from_file(scenario_dir + "/hybrid_default.toml");
  const auto sc = scene::build_scene(cfg);
  fs::remove_all("acc_out");

  int failed = 0;
  const auto gate = [&](int id, const char* name, const std::function<Outcome()>& body) {
    if (!run_criterion(id, name, body)) ++failed;
  };

  gate(1, "shot-noise sensitivity at the working point", [&]() -> Outcome {
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = fitters::estimate_sensitivity(
        sc.nv.contrast, sc.nv.t2_star_us, sc.nv.nu, sc.tracker.delta_f_MHz,
        sc.effective_rate_cps(), std::abs(sc.dfdT_at(sc.tracker.t_ref_K)));
    const double secs = seconds_since(t0);
    const double eta = rep.eta_K_per_sqrtHz * 1e6;
    return {eta >= 70.0 && eta <= 95.0 && secs < 1.0,
            fmt("eta = %.2f uK/sqrtHz in [70, 95], computed in %.3f s < 1 s", eta, secs)};
  });

  gate(2, "transducer calibration enhances the thermal shift", [&]() -> Outcome {
    const auto t0 = std::chrono::steady_clock::now();
    const auto fresh = scene::build_scene(cfg);
    const double enhancement = std::abs(fresh.dfdT_at(fresh.tracker.t_ref_K)) /
                               std::abs(fresh.nv.dD_dT_MHz_per_K);
    const double secs = seconds_since(t0);
    return {enhancement >= 550.0 && enhancement <= 700.0 && secs < 10.0,
            fmt("|df/dT| / |dD/dT| = %.1f in [550, 700], calibrated in %.2f s < 10 s",
                enhancement, secs)};
  });

  gate(3, "one-minute tracking run scales like white noise", [&]() -> Outcome {
    const auto t0 = std::chrono::steady_clock::now();
    const auto run = protocol::run_realtime_tracker(sc, 60.0, 0.005, 0.0);
    std::vector<double> windows(12);
    for (std::size_t i = 0; i < windows.size(); ++i) {
      windows[i] = 0.005 * std::pow(6.0 / 0.005, static_cast<double>(i) / 11.0);
    }
    const auto scaling = fitters::stddev_vs_integration(run.t_est_K, 0.005, windows);
    const double secs = seconds_since(t0);
    const double eta = scaling.eta_K_per_sqrtHz * 1e6;
    return {std::abs(scaling.slope + 0.5) <= 0.05 && eta >= 70.0 && eta <= 110.0 &&
                secs < 300.0,
            fmt("slope = %.3f within -0.5 +/- 0.05, eta = %.1f uK/sqrtHz in [70, 110], "
                "%.1f s < 300 s",
                scaling.slope, eta, secs)};
  });

  gate(4, "millikelvin samples pass a normality check", [&]() -> Outcome {
    auto sc4 = sc;
    sc4.master_seed = sc.master_seed + 1;
    const auto run = protocol::run_realtime_tracker(sc4, 30.0, 0.005, 0.0);
    if (run.t_est_K.size() != 6000) {
      return {false, fmt("expected 6000 samples, got %zu", run.t_est_K.size())};
    }
    const double sigma_mK = stddev_of(run.t_est_K) * 1e3;
    const double k2 = dagostino_k2(run.t_est_K);
    return {sigma_mK >= 1.0 && sigma_mK <= 2.0 && k2 < 9.21,
            fmt("sigma = %.3f mK in [1, 2], K^2 = %.2f < 9.21 on 6000 samples",
                sigma_mK, k2)};
  });

  gate(5, "laser heating relaxes with the configured transient", [&]() -> Outcome {
    const auto files = runner::run("cooling", cfg, sc, "acc_out/cooling");
    const json j = json_from(files, "cooling_fit.json");
    const double amp = j["params"]["amplitude"].get<double>();
    const double three_tau = j["three_tau_us"].get<double>();
    return {amp >= 17.0 && amp <= 23.0 && three_tau >= 1.275 && three_tau <= 1.725,
            fmt("step = %.2f mK within 20 +/- 15%%, 3 tau = %.3f us within 1.5 +/- 15%%",
                amp, three_tau)};
  });

  gate(6, "chopped wire heating resolves a 10 mK step", [&]() -> Outcome {
    const auto files = runner::run("heater", cfg, sc, "acc_out/heater");
    const json j = json_from(files, "heater_fit.json");
    const double step = j["amplitude_mK"].get<double>();
    const double tau = j["tau_s"].get<double>();
    const double drift = j["control_drift_mK"].get<double>();
    return {step >= 8.5 && step <= 11.5 && tau >= 0.85 && tau <= 1.15 && drift < 1.0,
            fmt("step = %.2f mK within 10 +/- 15%%, tau = %.3f s within 1 +/- 15%%, "
                "control drift = %.2f mK < 1 mK",
                step, tau, drift)};
  });

  gate(7, "transition frequencies match the cubic oracle", [&]() -> Outcome {
    rng::SplitMix64 gen(20260815);
    double worst_rel = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const double d = 2600.0 + 600.0 * gen.uniform();
      const Vec3 b{300.0 * (gen.uniform() - 0.5), 300.0 * (gen.uniform() - 0.5),
                   500.0 * (gen.uniform() - 0.5)};
      const auto oracle = cubic_eigenvalues(nvspin::hamiltonian(d, b, sc.nv));
      const auto pair = nvspin::transition_frequencies(d, b, sc.nv);
      const double f_hi = oracle[2] - oracle[0];
      worst_rel = std::max(worst_rel,
                           std::abs(pair.f_minus_MHz - (oracle[1] - oracle[0])) / f_hi);
      worst_rel =
          std::max(worst_rel, std::abs(pair.f_plus_MHz - f_hi) / f_hi);
    }
    double worst_axial = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const double d = 2700.0 + 300.0 * gen.uniform();
      const double bz = (1.0 + 499.0 * gen.uniform()) * (gen.uniform() < 0.5 ? -1.0 : 1.0);
      const auto pair = nvspin::transition_frequencies(d, {0.0, 0.0, bz}, sc.nv);
      const double zeeman = sc.nv.gamma_e_MHz_per_G * std::abs(bz);
      worst_axial = std::max(
          worst_axial, std::abs(pair.f_minus_MHz - (d - zeeman)) / (d + zeeman));
      worst_axial = std::max(
          worst_axial, std::abs(pair.f_plus_MHz - (d + zeeman)) / (d + zeeman));
    }
    return {worst_rel <= 1e-8 && worst_axial <= 1e-9,
            fmt("10000 random draws: worst rel err %.1e <= 1e-8; "
                "10000 axial draws: worst rel err %.1e <= 1e-9",
                worst_rel, worst_axial)};
  });

  gate(8, "mean-field magnetization solves its own equation", [&]() -> Outcome {
    rng::SplitMix64 gen(11);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const double t = 200.0 + 250.0 * gen.uniform();
      const double b = 500.0 * gen.uniform();
      const auto sol = magnet::solve_magnetization(t, b, sc.mnp);
      const double lhs = std::tanh(
          (sc.mnp.t_curie_K * sol.m + sc.mnp.field_coupling_K_per_G * b) / t);
      worst = std::max(worst, std::abs(sol.m - lhs));
    }
    bool monotone = true;
    double prev = 2.0;
    for (int i = 0; i <= 1500; ++i) {
      const double t = 250.0 + 150.0 * i / 1500.0;
      const double m = magnet::solve_magnetization(t, 192.0, sc.mnp).m;
      if (m > prev + 1e-14) monotone = false;
      prev = m;
    }
    bool zero_above = true;
    for (double t : {sc.mnp.t_curie_K + 1e-6, sc.mnp.t_curie_K + 5.0, 449.0}) {
      zero_above = zero_above && magnet::solve_magnetization(t, 0.0, sc.mnp).m == 0.0;
    }
    return {worst < 1e-10 && monotone && zero_above,
            fmt("worst residual %.1e < 1e-10 on 10000 draws, monotone in T, "
                "m = 0 above the Curie point at zero field",
                worst)};
  });

  gate(9, "fitters are exact on clean data, 5 percent on shot noise", [&]() -> Outcome {
    double worst_clean = 0.0;
    const auto track = [&](double fitted, double truth) {
      worst_clean = std::max(worst_clean,
                             std::abs(fitted - truth) / std::max(std::abs(truth), 1.0));
    };

    fitters::Spectrum sp;
    const std::vector<double> lines{2290.3, 2295.1};
    sp.f_MHz.resize(261);
    for (std::size_t i = 0; i < sp.f_MHz.size(); ++i) {
      sp.f_MHz[i] = 2286.0 + 13.0 * static_cast<double>(i) / 260.0;
    }
    sp.s = nvspin::odmr_spectrum(sp.f_MHz, lines, sc.nv);
    const auto dips = fitters::fit_lorentzian_multi(sp, 2, false, sc.nv.linewidth_MHz);
    track(dips.param("center_0"), lines[0]);
    track(dips.param("center_1"), lines[1]);
    track(dips.param("fwhm_0"), sc.nv.linewidth_MHz);
    track(dips.param("depth_1"), sc.nv.contrast);
    track(dips.param("baseline"), 1.0);

    std::vector<double> taus(180), clean(180);
    for (std::size_t i = 0; i < taus.size(); ++i) {
      taus[i] = 0.02 * static_cast<double>(i);
      clean[i] = nvspin::fid_signal(taus[i], 2.7, sc.nv);
    }
    const auto fid = fitters::fit_fid(taus, clean);
    track(fid.param("contrast"), sc.nv.contrast);
    track(fid.param("delta_f_MHz"), 2.7);
    track(fid.param("t2_star_us"), sc.nv.t2_star_us);
    track(fid.param("nu"), sc.nv.nu);

    std::vector<double> tt(61), yy(61);
    for (std::size_t i = 0; i < tt.size(); ++i) {
      tt[i] = 0.1 * static_cast<double>(i);
      yy[i] = 2.5 * std::exp(-tt[i] / 1.7) + 0.3;
    }
    const auto expo = fitters::fit_exponential(tt, yy);
    track(expo.param("amplitude"), 2.5);
    track(expo.param("tau"), 1.7);
    track(expo.param("offset"), 0.3);

    std::vector<double> scan_taus(151);
    for (std::size_t i = 0; i < scan_taus.size(); ++i) {
      scan_taus[i] = 0.02 * static_cast<double>(i);
    }
    const auto scan = protocol::run_fid_scan(sc, scan_taus);
    const auto noisy = fitters::fit_fid(scan.tau_us, scan.s_norm);
    double worst_noisy = 0.0;
    const auto track_noisy = [&](const char* name, double truth) {
      worst_noisy = std::max(worst_noisy,
                             std::abs(noisy.param(name) - truth) / std::abs(truth));
    };
    track_noisy("contrast", sc.nv.contrast);
    track_noisy("delta_f_MHz", scan.delta_f_MHz);
    track_noisy("t2_star_us", sc.nv.t2_star_us);
    track_noisy("nu", sc.nv.nu);

    return {worst_clean <= 1e-6 && worst_noisy <= 0.05,
            fmt("clean fits: worst rel err %.1e <= 1e-6; million-shot fringe fit: "
                "worst rel err %.2f%% <= 5%%",
                worst_clean, 100.0 * worst_noisy)};
  });

  gate(10, "CLI outputs replay byte-for-byte", [&]() -> Outcome {
    const std::string cli = NVTHERM_CLI_PATH;
    const std::string quick = scenario_dir + "/quick.toml";
    const std::vector<std::string> commands{"demag",  "odmr",   "fid",
                                            "cooling", "track",  "heater",
                                            "sensitivity", "calibrate"};
    for (const auto& cmd : commands) {
      const std::string base = "acc_out/cli_" + cmd;
      const std::string common =
          "\"" + cli + "\" --config \"" + quick + "\" ";
      if (run_shell(common + "--out " + base + "_a " + cmd + " > /dev/null 2>&1") != 0 ||
          run_shell(common + "--out " + base + "_b " + cmd + " > /dev/null 2>&1") != 0 ||
          run_shell(common + "--threads 4 --out " + base + "_c " + cmd +
                    " > /dev/null 2>&1") != 0) {
        return {false, cmd + " did not exit cleanly"};
      }
      const auto a = snapshot(base + "_a");
      if (a.empty() || a != snapshot(base + "_b") || a != snapshot(base + "_c")) {
        return {false, cmd + " outputs differ between same-seed runs"};
      }
    }
    return {true, "8 subcommands x 3 runs (including --threads 4) byte-identical"};
  });

  std::printf("%d/10 criteria passed\n", 10 - failed);
  fs::remove_all("acc_out");
  return failed == 0 ? 0 : 1;
}
