#include "nvtherm/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "nvtherm/errors.hpp"
#include "nvtherm/fitters.hpp"
#include "nvtherm/magnet.hpp"
#include "nvtherm/nvspin.hpp"
#include "nvtherm/output.hpp"
#include "nvtherm/protocol.hpp"
#include "nvtherm/version.hpp"

namespace nvtherm::runner {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using output::int_column;
using output::num_column;

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = a + (b - a) * static_cast<double>(i) / (n - 1.0);
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / (v.size() - 1.0));
}

json fit_json(const fitters::FitResult& fit) {
  json j;
  for (std::size_t i = 0; i < fit.names.size(); ++i) {
    j["params"][fit.names[i]] = fit.params[i];
    j["stderr"][fit.names[i]] = fit.stderr_proxy[i];
  }
  j["residual_norm"] = fit.residual_norm;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["warning"] = fit.warning;
  j["message"] = fit.message;
  return j;
}

// Collects output files and the JSON manifest for one subcommand run.
struct Emitter {
  fs::path dir;
  std::vector<std::string> files;
  json manifest;
  std::string command;

  Emitter(const std::string& out_dir, std::string cmd, const config::Config& cfg,
          const scene::Scene& sc)
      : command(std::move(cmd)) {
    dir = fs::path(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
      throw ConfigError("cannot create output directory '" + out_dir +
                        "': " + ec.message());
    }
    char hex[24];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(cfg.hash()));
    manifest["command"] = command;
    manifest["version"] = kVersion;
    manifest["seed"] = sc.master_seed;
    manifest["shots"] = sc.shots;
    manifest["threads"] = sc.threads;
    manifest["config_hash"] = hex;
    manifest["generated_utc"] = output::utc_timestamp();
  }

  void csv(const std::string& name, const std::vector<output::Column>& cols) {
    const std::string path = (dir / name).string();
    output::write_csv(path, cols);
    files.push_back(path);
  }

  void json_file(const std::string& name, const json& j) {
    const std::string path = (dir / name).string();
    output::write_text(path, j.dump(2) + "\n");
    files.push_back(path);
  }

  std::vector<std::string> finish() {
    json names = json::array();
    for (const auto& f : files) names.push_back(fs::path(f).filename().string());
    manifest["files"] = names;
    const std::string path = (dir / (command + "_manifest.json")).string();
    output::write_text(path, manifest.dump(2) + "\n");
    files.push_back(path);
    return files;
  }
};

void cmd_demag(const config::Config& cfg, const scene::Scene& sc, Emitter& em) {
  const double t_min = cfg.number_or("demag.t_min_K", 250.0);
  const double t_max = cfg.number_or("demag.t_max_K", 400.0);
  const int points = static_cast<int>(cfg.number_or("demag.points", 301.0));
  if (points < 2) throw ConfigError("demag.points: need at least 2 grid points");
  if (!(t_max > t_min)) throw ConfigError("demag: t_max_K must exceed t_min_K");

  const auto grid = linspace(t_min, t_max, points);
  const double b_mag = norm(sc.b_ext_G);
  std::vector<double> m(grid.size()), b_par(grid.size()), f_minus(grid.size()),
      dfdT(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    m[i] = magnet::solve_magnetization(grid[i], b_mag, sc.mnp).m;
    b_par[i] = magnet::field_at_nv(grid[i], sc.b_ext_G, sc.mnp, sc.nv.axis).b_parallel_G;
    f_minus[i] = sc.f_minus_at(grid[i]);
    dfdT[i] = sc.dfdT_at(grid[i]);
  }
  em.csv("demag_curve.csv", {num_column("t_K", grid), num_column("m", m),
                             num_column("b_parallel_G", b_par)});
  em.csv("demag_susceptibility.csv",
         {num_column("t_K", grid), num_column("f_minus_MHz", f_minus),
          num_column("dfdT_MHz_per_K", dfdT)});

  std::size_t peak = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (std::abs(dfdT[i]) > std::abs(dfdT[peak])) peak = i;
  }
  em.manifest["results"] = {
      {"t_peak_K", grid[peak]},
      {"dfdT_peak_MHz_per_K", dfdT[peak]},
      {"enhancement_vs_dD_dT", std::abs(dfdT[peak] / sc.nv.dD_dT_MHz_per_K)}};
}

void cmd_odmr(const config::Config& cfg, const scene::Scene& sc, Emitter& em) {
  const auto t_list =
      cfg.numbers_or("odmr.t_list_K", {298.0, 304.5, 311.0, 317.5, 324.0});
  if (t_list.empty()) throw ConfigError("odmr.t_list_K: temperature list is empty");
  const double span = cfg.number_or("odmr.span_MHz", 8.0);
  const int points = static_cast<int>(cfg.number_or("odmr.points", 161.0));
  if (points < 9) throw ConfigError("odmr.points: need at least 9 grid points");
  if (!(span > 0.0)) throw ConfigError("odmr.span_MHz: must be > 0");

  std::vector<double> sp_t, sp_branch, sp_f, sp_s;
  std::vector<long long> sp_counts;
  std::vector<double> ct_t, ct_fm, ct_fm_se, ct_fp, ct_fp_se, ct_split;
  const bool hyperfine = sc.nv.hyperfine_split_MHz > 0.0;

  for (std::size_t ti = 0; ti < t_list.size(); ++ti) {
    const double t_env = t_list[ti];
    const double t_sense = t_env + sc.laser_excess_K(sc.seq.t_w_ns);
    const auto pair = sc.transitions_at(t_sense);
    double centers[2] = {0.0, 0.0};
    double stderrs[2] = {0.0, 0.0};
    for (int branch = 0; branch < 2; ++branch) {
      const double predicted = branch == 0 ? pair.f_minus_MHz : pair.f_plus_MHz;
      const auto grid =
          linspace(predicted - 0.5 * span, predicted + 0.5 * span, points);
      const auto series =
          protocol::run_pulsed_odmr(sc, grid, t_env, sc.shots,
                                    protocol::StreamId::odmr, ti * 2 + branch);
      const auto fit = fitters::fit_lorentzian_multi({series.f_MHz, series.s_norm}, 1,
                                                     hyperfine, sc.nv.linewidth_MHz);
      centers[branch] = fit.param("center_0");
      stderrs[branch] = fit.stderr_of("center_0");
      for (std::size_t i = 0; i < grid.size(); ++i) {
        sp_t.push_back(t_env);
        sp_branch.push_back(branch == 0 ? -1.0 : 1.0);
        sp_f.push_back(series.f_MHz[i]);
        sp_counts.push_back(series.counts[i]);
        sp_s.push_back(series.s_norm[i]);
      }
    }
    ct_t.push_back(t_env);
    ct_fm.push_back(centers[0]);
    ct_fm_se.push_back(stderrs[0]);
    ct_fp.push_back(centers[1]);
    ct_fp_se.push_back(stderrs[1]);
    ct_split.push_back(centers[1] - centers[0]);
  }

  em.csv("odmr_spectra.csv",
         {num_column("t_env_K", sp_t), num_column("branch", sp_branch),
          num_column("f_MHz", sp_f), int_column("counts", sp_counts),
          num_column("s_norm", sp_s)});
  em.csv("odmr_centers.csv",
         {num_column("t_env_K", ct_t), num_column("f_minus_MHz", ct_fm),
          num_column("f_minus_stderr_MHz", ct_fm_se), num_column("f_plus_MHz", ct_fp),
          num_column("f_plus_stderr_MHz", ct_fp_se),
          num_column("splitting_MHz", ct_split)});
  em.manifest["results"] = {{"f_minus_first_MHz", ct_fm.front()},
                            {"f_minus_last_MHz", ct_fm.back()}};
}

void cmd_fid(const config::Config& cfg, const scene::Scene& sc, Emitter& em) {
  const double tau_max = cfg.number_or("fid.tau_max_us", 3.0);
  const double dt = cfg.number_or("fid.dt_us", 0.02);
  if (!(dt > 0.0) || !(tau_max > 0.0)) {
    throw ConfigError("fid: tau_max_us and dt_us must be > 0");
  }
  const int n = static_cast<int>(std::floor(tau_max / dt)) + 1;
  if (n < 8) throw ConfigError("fid: grid has fewer than 8 points");
  std::vector<double> taus(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) taus[static_cast<std::size_t>(i)] = i * dt;

  const auto scan = protocol::run_fid_scan(sc, taus);
  em.csv("fid_signal.csv",
         {num_column("tau_us", scan.tau_us), num_column("pad_ns", scan.pad_ns),
          num_column("laser_on_ns", scan.laser_on_ns),
          int_column("counts", scan.counts), num_column("s_norm", scan.s_norm)});

  const auto fit = fitters::fit_fid(scan.tau_us, scan.s_norm);
  json j = fit_json(fit);
  j["truth"] = {{"contrast", sc.nv.contrast},
                {"delta_f_MHz", scan.delta_f_MHz},
                {"t2_star_us", sc.nv.t2_star_us},
                {"nu", sc.nv.nu}};
  em.json_file("fid_fit.json", j);
  em.manifest["results"] = {{"delta_f_MHz", fit.param("delta_f_MHz")},
                            {"t2_star_us", fit.param("t2_star_us")}};
}

void cmd_cooling(const config::Config& cfg, const scene::Scene& sc, Emitter& em) {
  std::vector<double> t_w = cfg.numbers_or("cooling.t_w_list_us", {});
  if (t_w.empty()) {
    const double max = cfg.number_or("cooling.t_w_max_us", 4.0);
    const double step = cfg.number_or("cooling.t_w_step_us", 0.25);
    if (!(step > 0.0) || !(max > 0.0)) {
      throw ConfigError("cooling: t_w_max_us and t_w_step_us must be > 0");
    }
    for (double w = 0.0; w <= max + 1e-12; w += step) t_w.push_back(w);
  }
  const double reference = cfg.number_or("cooling.reference_t_w_us", 10.0);

  const auto scan = protocol::run_cooling_scan(sc, t_w, reference);
  em.csv("cooling_scan.csv",
         {num_column("t_w_us", scan.t_w_us), num_column("center_MHz", scan.center_MHz),
          num_column("center_stderr_MHz", scan.center_stderr_MHz),
          num_column("dt_mK", scan.dt_mK),
          num_column("excess_true_mK", scan.excess_true_mK)});

  const auto fit = fitters::fit_exponential(scan.t_w_us, scan.dt_mK);
  json j = fit_json(fit);
  j["three_tau_us"] = 3.0 * fit.param("tau");
  j["reference_t_w_us"] = scan.reference_t_w_us;
  j["reference_center_MHz"] = scan.reference_center_MHz;
  j["dfdT_MHz_per_K"] = scan.dfdT_MHz_per_K;
  j["truth"] = {{"amplitude_mK", sc.laser_excess_K(0.0) * 1e3},
                {"tau_us", sc.laser.tau_s * 1e6}};
  em.json_file("cooling_fit.json", j);
  em.manifest["results"] = {{"amplitude_mK", fit.param("amplitude")},
                            {"three_tau_us", 3.0 * fit.param("tau")}};
}

void cmd_track(const config::Config& cfg, const scene::Scene& sc, Emitter& em) {
  const auto run = protocol::run_realtime_tracker(sc, sc.tracker.duration_s,
                                                  sc.tracker.sample_s,
                                                  sc.tracker.tau_us);
  em.csv("track_timeseries.csv",
         {num_column("t_s", run.t_s), num_column("s_norm", run.s_norm),
          num_column("delta_f_MHz", run.delta_f_MHz),
          num_column("t_est_K", run.t_est_K), num_column("t_true_K", run.t_true_K)});

  const double mean = mean_of(run.t_est_K);
  const double sd = stddev_of(run.t_est_K);
  const int bins = static_cast<int>(cfg.number_or("track.bins", 41.0));
  if (bins < 5) throw ConfigError("track.bins: need at least 5 bins");
  const double lo = mean - 4.5 * sd;
  const double hi = mean + 4.5 * sd;
  const double width = (hi - lo) / bins;
  std::vector<double> centers_K(static_cast<std::size_t>(bins)),
      dev_mK(static_cast<std::size_t>(bins));
  std::vector<long long> counts(static_cast<std::size_t>(bins), 0);
  for (int b = 0; b < bins; ++b) {
    centers_K[static_cast<std::size_t>(b)] = lo + (b + 0.5) * width;
    dev_mK[static_cast<std::size_t>(b)] =
        (centers_K[static_cast<std::size_t>(b)] - mean) * 1e3;
  }
  for (double t : run.t_est_K) {
    const int b = static_cast<int>(std::floor((t - lo) / width));
    if (b >= 0 && b < bins) ++counts[static_cast<std::size_t>(b)];
  }

  // Gaussian profile fit over the binned deviations (millikelvin axis).
  std::vector<double> count_f(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    count_f[i] = static_cast<double>(counts[i]);
  }
  const double a0 = *std::max_element(count_f.begin(), count_f.end());
  const auto gauss = fitters::lm_fit(
      [&](std::span<const double> p, std::span<double> r) {
        for (std::size_t i = 0; i < count_f.size(); ++i) {
          const double z = (dev_mK[i] - p[1]) / p[2];
          r[i] = p[0] * std::exp(-0.5 * z * z) - count_f[i];
        }
      },
      count_f.size(), {a0, 0.0, sd * 1e3}, {"amplitude", "mean_mK", "sigma_mK"},
      {1e-9, -1e6, 1e-9}, {1e12, 1e6, 1e6});

  std::vector<double> gauss_curve(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double z = (dev_mK[i] - gauss.params[1]) / gauss.params[2];
    gauss_curve[i] = gauss.params[0] * std::exp(-0.5 * z * z);
  }
  em.csv("track_histogram.csv",
         {num_column("t_est_K", centers_K), num_column("dev_mK", dev_mK),
          int_column("count", counts), num_column("gauss_fit", gauss_curve)});

  std::vector<double> windows = cfg.numbers_or("track.windows_s", {});
  if (windows.empty()) {
    const int n_w = 12;
    const double w_min = run.t_s.size() >= 2 ? run.t_s[1] - run.t_s[0]
                                             : sc.tracker.sample_s;
    const double w_max = sc.tracker.duration_s / 10.0;
    for (int k = 0; k < n_w; ++k) {
      windows.push_back(w_min * std::pow(w_max / w_min,
                                         static_cast<double>(k) / (n_w - 1.0)));
    }
  }
  const auto scaling =
      fitters::stddev_vs_integration(run.t_est_K, sc.tracker.sample_s, windows);
  em.csv("track_scaling.csv", {num_column("window_s", scaling.window_s),
                               num_column("sigma_K", scaling.sigma_K)});

  json report;
  report["tau_us"] = run.tau_us;
  report["f_drive_MHz"] = run.f_drive_MHz;
  report["s0"] = run.s0;
  report["responsivity_per_MHz"] = run.responsivity_per_MHz;
  report["dfdT_MHz_per_K"] = run.dfdT_MHz_per_K;
  report["reps_per_sample"] = run.reps_per_sample;
  report["sample_s"] = sc.tracker.sample_s;
  report["duration_s"] = sc.tracker.duration_s;
  report["mean_K"] = mean;
  report["sigma_sample_mK"] = sd * 1e3;
  report["gaussian"] = fit_json(gauss);
  report["scaling"] = {{"slope", scaling.slope},
                       {"eta_K_per_sqrtHz", scaling.eta_K_per_sqrtHz},
                       {"eta_uK_per_sqrtHz", scaling.eta_K_per_sqrtHz * 1e6}};

  if (sc.env.square_period_s > 0.0 && sc.env.square_amplitude_K != 0.0) {
    const double half = 0.5 * sc.env.square_period_s;
    const double w = sc.tracker.sample_s;
    std::vector<double> low, high;
    for (std::size_t i = 0; i < run.t_s.size(); ++i) {
      const double t0 = run.t_s[i] - 0.5 * w;
      const double t1 = run.t_s[i] + 0.5 * w;
      if (std::floor(t0 / half + 1e-9) != std::floor((t1 - 1e-12) / half + 1e-9)) {
        continue;  // sample straddles a square edge
      }
      double phase = std::fmod(run.t_s[i], sc.env.square_period_s);
      if (phase < 0.0) phase += sc.env.square_period_s;
      (phase < half ? low : high).push_back(run.t_est_K[i]);
    }
    if (!low.empty() && !high.empty()) {
      report["square"] = {
          {"injected_mK", sc.env.square_amplitude_K * 1e3},
          {"recovered_mK", (mean_of(high) - mean_of(low)) * 1e3},
          {"samples_low", low.size()},
          {"samples_high", high.size()}};
    }
  }
  em.json_file("track_report.json", report);
  em.manifest["results"] = {{"sigma_sample_mK", sd * 1e3},
                            {"scaling_slope", scaling.slope},
                            {"eta_uK_per_sqrtHz", scaling.eta_K_per_sqrtHz * 1e6}};
}

struct FoldedCycle {
  std::vector<double> t_cycle_s;
  std::vector<double> dt_mK;
  std::vector<long long> n_avg;
};

// Cycle-average of the estimated excess, skipping the first (transient)
// cycle. Requires sample_s to divide the chop period evenly.
FoldedCycle fold_cycles(const protocol::HeaterRun& run, double sample_s) {
  const double ratio = run.period_s / sample_s;
  const long long per_cycle = std::llround(ratio);
  if (per_cycle < 4 || std::abs(ratio - static_cast<double>(per_cycle)) > 1e-9) {
    throw ConfigError("heater: sample_s must divide the chop period evenly");
  }
  FoldedCycle fold;
  const std::size_t n_bins = static_cast<std::size_t>(per_cycle);
  fold.t_cycle_s.resize(n_bins);
  fold.dt_mK.assign(n_bins, 0.0);
  fold.n_avg.assign(n_bins, 0);
  for (std::size_t b = 0; b < n_bins; ++b) {
    fold.t_cycle_s[b] = (static_cast<double>(b) + 0.5) * sample_s;
  }
  for (std::size_t i = 0; i < run.t_s.size(); ++i) {
    if (run.t_s[i] < run.period_s) continue;
    const std::size_t b = i % n_bins;
    fold.dt_mK[b] += run.dt_est_mK[i];
    ++fold.n_avg[b];
  }
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (fold.n_avg[b] > 0) fold.dt_mK[b] /= static_cast<double>(fold.n_avg[b]);
  }
  return fold;
}

void heater_trace_csv(Emitter& em, const std::string& name,
                      const protocol::HeaterRun& run) {
  em.csv(name, {num_column("t_s", run.t_s), num_column("level", run.level),
                num_column("f_MHz", run.f_MHz),
                num_column("f_field_only_MHz", run.f_field_only_MHz),
                num_column("dt_est_mK", run.dt_est_mK),
                num_column("t_local_true_K", run.t_local_true_K)});
}

void cmd_heater(const config::Config& cfg, const scene::Scene& sc, Emitter& em) {
  const int cycles = static_cast<int>(cfg.number_or("heater.cycles", 6.0));
  const double sample_s = cfg.number_or("heater.sample_s", 0.25);
  if (cycles < 2) throw ConfigError("heater.cycles: need at least 2 chop cycles");

  const auto chopped = protocol::run_chopped_dc(sc, false, cycles, sample_s);
  const auto control = protocol::run_chopped_dc(sc, true, cycles, sample_s);
  heater_trace_csv(em, "heater_trace.csv", chopped);
  heater_trace_csv(em, "heater_control.csv", control);

  const auto fold = fold_cycles(chopped, sample_s);
  em.csv("heater_avg.csv",
         {num_column("t_cycle_s", fold.t_cycle_s), num_column("dt_mK", fold.dt_mK),
          int_column("n_avg", fold.n_avg)});

  // The drive is on during the first half cycle; fit the decay that follows.
  const std::size_t half = fold.dt_mK.size() / 2;
  std::vector<double> t_rel(half), y(half);
  for (std::size_t i = 0; i < half; ++i) {
    t_rel[i] = (static_cast<double>(i) + 0.5) * sample_s;
    y[i] = fold.dt_mK[half + i];
  }
  const auto fit = fitters::fit_exponential(t_rel, y);
  // the fit anchors its amplitude at the first sample; quote the step height
  // at the chop edge half a sample earlier
  const double step_mK =
      fit.param("amplitude") * std::exp(t_rel.front() / fit.param("tau"));

  const auto ctrl_fold = fold_cycles(control, sample_s);
  double drift = 0.0;
  const std::size_t q = std::max<std::size_t>(half / 4, 1);
  for (int h = 0; h < 2; ++h) {
    const std::size_t base = static_cast<std::size_t>(h) * half;
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < q; ++i) {
      first += ctrl_fold.dt_mK[base + 1 + i];  // skip the edge-straddling sample
      last += ctrl_fold.dt_mK[base + half - q + i];
    }
    drift = std::max(drift, std::abs(last - first) / static_cast<double>(q));
  }

  json j = fit_json(fit);
  j["amplitude_mK"] = step_mK;
  j["tau_s"] = fit.param("tau");
  j["control_drift_mK"] = drift;
  j["cycles"] = cycles;
  j["period_s"] = chopped.period_s;
  j["truth"] = {{"amplitude_mK", sc.stripline.amplitude_K * 1e3},
                {"tau_s", sc.stripline.tau_s}};
  em.json_file("heater_fit.json", j);
  em.manifest["results"] = {{"amplitude_mK", step_mK},
                            {"tau_s", fit.param("tau")},
                            {"control_drift_mK", drift}};
}

void cmd_sensitivity(const config::Config&, const scene::Scene& sc, Emitter& em) {
  const double dfdT = std::abs(sc.dfdT_at(sc.tracker.t_ref_K));
  const auto rep = fitters::estimate_sensitivity(sc.nv.contrast, sc.nv.t2_star_us,
                                                 sc.nv.nu, sc.tracker.delta_f_MHz,
                                                 sc.effective_rate_cps(), dfdT);
  json j;
  j["joint"] = {{"eta_K_per_sqrtHz", rep.eta_K_per_sqrtHz},
                {"eta_uK_per_sqrtHz", rep.eta_K_per_sqrtHz * 1e6},
                {"t_optimal_us", rep.t_optimal_us},
                {"ds_df_max_per_MHz", rep.ds_df_max_per_MHz}};
  j["envelope"] = {{"eta_K_per_sqrtHz", rep.eta_envelope_K_per_sqrtHz},
                   {"eta_uK_per_sqrtHz", rep.eta_envelope_K_per_sqrtHz * 1e6},
                   {"t_optimal_us", rep.t_envelope_us},
                   {"ds_df_max_per_MHz", rep.ds_df_envelope_per_MHz}};
  j["inputs"] = {{"contrast", rep.contrast},
                 {"t2_star_us", rep.t2_star_us},
                 {"nu", rep.nu},
                 {"delta_f_MHz", rep.delta_f_MHz},
                 {"l_eff_cps", rep.l_eff_cps},
                 {"dfdT_MHz_per_K", rep.dfdT_MHz_per_K}};
  em.json_file("sensitivity_report.json", j);
  em.manifest["results"] = {{"eta_uK_per_sqrtHz", rep.eta_K_per_sqrtHz * 1e6},
                            {"t_optimal_us", rep.t_optimal_us}};
}

void cmd_calibrate(const config::Config& cfg, const scene::Scene& sc, Emitter& em) {
  const auto settings =
      cfg.numbers_or("calibrate.settings", {0.0, 1.0, 2.0, 3.0, 4.0, 5.0});
  if (settings.size() < 2) {
    throw ConfigError("calibrate.settings: need at least 2 control settings");
  }
  const double quad = cfg.number_or("calibrate.quad_K_per_setting2", 0.5);
  const double b_axial = cfg.number_or("calibrate.b_axial_G", 5.0);
  const double hyperfine = cfg.number_or("calibrate.hyperfine_MHz", 3.0);
  const double span = cfg.number_or("calibrate.span_MHz", 40.0);
  const int points = static_cast<int>(cfg.number_or("calibrate.points", 401.0));
  if (points < 9) throw ConfigError("calibrate.points: need at least 9 grid points");
  if (!(hyperfine > 0.0)) throw ConfigError("calibrate.hyperfine_MHz: must be > 0");
  if (!(span > 2.0 * (sc.nv.gamma_e_MHz_per_G * std::abs(b_axial) + hyperfine))) {
    throw ConfigError("calibrate.span_MHz: window too narrow for the four-line pattern");
  }

  // Reference sensor: same diamond parameters, no particle, a small axial
  // bias so both electronic lines sit inside one window with their doublets.
  scene::Scene ref = sc;
  ref.mnp.m_sat_Am2 = 0.0;
  ref.b_ext_G = ref.nv.axis * b_axial;
  ref.nv.hyperfine_split_MHz = hyperfine;

  std::vector<double> sp_setting, sp_f, sp_s;
  std::vector<long long> sp_counts;
  std::vector<double> d_est(settings.size()), d_se(settings.size()),
      t_true(settings.size());

  for (std::size_t k = 0; k < settings.size(); ++k) {
    t_true[k] = ref.nv.t0_K + quad * settings[k] * settings[k];
    const double d_pred = nvspin::d_of_temperature(t_true[k], ref.nv);
    const auto grid = linspace(d_pred - 0.5 * span, d_pred + 0.5 * span, points);
    const auto series = protocol::run_pulsed_odmr(ref, grid, t_true[k], ref.shots,
                                                  protocol::StreamId::calibrate, k);
    const auto fit = fitters::fit_lorentzian_multi({series.f_MHz, series.s_norm}, 2,
                                                   true, ref.nv.linewidth_MHz);
    // the electronic Zeeman pair is symmetric about D, so the mean of the
    // four dip positions (= mean of the two doublet midpoints) recovers it
    d_est[k] = 0.5 * (fit.param("center_0") + fit.param("center_1"));
    d_se[k] = 0.5 * std::hypot(fit.stderr_of("center_0"), fit.stderr_of("center_1"));
    for (std::size_t i = 0; i < grid.size(); ++i) {
      sp_setting.push_back(settings[k]);
      sp_f.push_back(series.f_MHz[i]);
      sp_counts.push_back(series.counts[i]);
      sp_s.push_back(series.s_norm[i]);
    }
  }

  std::vector<std::pair<double, double>> pairs(settings.size());
  for (std::size_t k = 0; k < settings.size(); ++k) pairs[k] = {settings[k], d_est[k]};
  const auto calib = fitters::calibrate_temperature(pairs, ref.nv);

  std::vector<double> err_mK(settings.size());
  double max_err = 0.0;
  for (std::size_t k = 0; k < settings.size(); ++k) {
    err_mK[k] = (calib.temps_K[k] - t_true[k]) * 1e3;
    max_err = std::max(max_err, std::abs(err_mK[k]));
  }

  em.csv("calibrate_spectra.csv",
         {num_column("setting", sp_setting), num_column("f_MHz", sp_f),
          int_column("counts", sp_counts), num_column("s_norm", sp_s)});
  em.csv("calibrate_points.csv",
         {num_column("setting", calib.settings), num_column("d_MHz", calib.d_MHz),
          num_column("d_stderr_MHz", d_se), num_column("t_est_K", calib.temps_K),
          num_column("t_true_K", t_true), num_column("error_mK", err_mK)});

  json j;
  j["monotonic_warning"] = calib.monotonic_warning;
  j["max_abs_error_mK"] = max_err;
  j["quad_K_per_setting2"] = quad;
  j["b_axial_G"] = b_axial;
  j["hyperfine_MHz"] = hyperfine;
  em.json_file("calibrate_fit.json", j);
  em.manifest["results"] = {{"max_abs_error_mK", max_err},
                            {"monotonic_warning", calib.monotonic_warning}};
}

}  // namespace

const std::vector<std::string>& commands() {
  static const std::vector<std::string> list = {"demag",  "odmr",        "fid",
                                                "cooling", "track",      "heater",
                                                "sensitivity", "calibrate"};
  return list;
}

std::vector<std::string> run(const std::string& command, const config::Config& cfg,
                             const scene::Scene& sc, const std::string& out_dir) {
  Emitter em(out_dir, command, cfg, sc);
  if (command == "demag") {
    cmd_demag(cfg, sc, em);
  } else if (command == "odmr") {
    cmd_odmr(cfg, sc, em);
  } else if (command == "fid") {
    cmd_fid(cfg, sc, em);
  } else if (command == "cooling") {
    cmd_cooling(cfg, sc, em);
  } else if (command == "track") {
    cmd_track(cfg, sc, em);
  } else if (command == "heater") {
    cmd_heater(cfg, sc, em);
  } else if (command == "sensitivity") {
    cmd_sensitivity(cfg, sc, em);
  } else if (command == "calibrate") {
    cmd_calibrate(cfg, sc, em);
  } else {
    throw ConfigError("unknown subcommand '" + command + "'");
  }
  return em.finish();
}

}  // namespace nvtherm::runner
