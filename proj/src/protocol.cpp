#include "nvtherm/protocol.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <future>
#include <sstream>

#include "nvtherm/errors.hpp"
#include "nvtherm/nvspin.hpp"
#include "nvtherm/thermal.hpp"

namespace nvtherm::protocol {

namespace {

constexpr double kNsToS = 1e-9;

ReadoutModel readout_of(const scene::Scene& sc) {
  return {sc.rate_bright_cps, sc.rate_dark_cps};
}

std::uint64_t op_seed(const scene::Scene& sc, StreamId stream, std::uint64_t salt) {
  const auto base = rng::derive_stream(sc.master_seed, static_cast<std::uint64_t>(stream));
  return rng::derive_stream(base, salt);
}

double normalize_counts(long long counts, long long shots, const scene::Scene& sc) {
  const double window_s = sc.seq.readout_window_ns * kNsToS;
  return static_cast<double>(counts) /
         (static_cast<double>(shots) * sc.rate_bright_cps * window_s);
}

// Wait-time feasibility within the fixed repetition period; returns the idle
// padding that keeps t_r (and so the laser duty) constant.
double padding_ns(const PulseSequence& seq, double t_w_ns, double mw_span_ns) {
  const double used = seq.laser_init_ns + t_w_ns + mw_span_ns + seq.readout_window_ns;
  return seq.t_r_ns - used;
}

}  // namespace

long long simulate_readout(double p0, double window_ns, const ReadoutModel& model,
                           rng::SplitMix64& gen) {
  if (!(p0 >= 0.0 && p0 <= 1.0)) throw InvalidArgument("p0 must be in [0, 1]");
  if (!(window_ns > 0.0)) throw InvalidArgument("window_ns must be > 0");
  const double rate = p0 * model.rate_bright_cps + (1.0 - p0) * model.rate_dark_cps;
  return rng::poisson(rate * window_ns * kNsToS, gen);
}

long long counts_for_signal(double s_norm, double window_ns, long long shots,
                            const ReadoutModel& model, std::uint64_t seed) {
  if (shots <= 0) throw InvalidArgument("shots must be > 0");
  if (!(s_norm >= 0.0)) throw InvalidArgument("signal level must be >= 0");
  const double mean = s_norm * model.rate_bright_cps * window_ns * kNsToS *
                      static_cast<double>(shots);
  rng::SplitMix64 gen(seed);
  return rng::poisson(mean, gen);
}

std::uint64_t derive_shot_seed(std::uint64_t master_seed, std::uint64_t shot_index) {
  return rng::derive_stream(master_seed, shot_index);
}

void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& body) {
  const int workers = static_cast<int>(
      std::min<std::size_t>(std::max(threads, 1), std::max<std::size_t>(n, 1)));
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> tasks;
  tasks.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    tasks.push_back(std::async(std::launch::async, [&]() {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
    }));
  }
  std::exception_ptr first_error;
  for (auto& task : tasks) {
    try {
      task.get();
    } catch (...) {
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

ShotSeries run_pulsed_odmr(const scene::Scene& sc, std::span<const double> f_list_MHz,
                           double t_env_K, long long shots_per_point, StreamId stream,
                           std::uint64_t salt) {
  if (f_list_MHz.empty()) throw ConfigError("odmr: probe frequency list is empty");
  if (shots_per_point <= 0) throw ConfigError("odmr: shots_per_point must be > 0");

  const double t_sense = t_env_K + sc.laser_excess_K(sc.seq.t_w_ns);
  const auto pair = sc.transitions_at(t_sense);
  const std::array<double, 2> lines{pair.f_minus_MHz, pair.f_plus_MHz};
  const auto s_model = nvspin::odmr_spectrum(f_list_MHz, lines, sc.nv);

  ShotSeries out;
  out.tag = "pulsed_odmr";
  out.rng_seed = op_seed(sc, stream, salt);
  out.shots_per_point = shots_per_point;
  const std::size_t n = f_list_MHz.size();
  out.timestamps_s.resize(n);
  out.f_MHz.resize(n);
  out.counts.resize(n);
  out.s_norm.resize(n);

  const ReadoutModel readout = readout_of(sc);
  const double point_time_s =
      static_cast<double>(shots_per_point) * sc.seq.t_r_ns * kNsToS;
  parallel_for(n, sc.threads, [&](std::size_t i) {
    out.f_MHz[i] = f_list_MHz[i];
    out.counts[i] = counts_for_signal(s_model[i], sc.seq.readout_window_ns,
                                      shots_per_point, readout,
                                      rng::derive_stream(out.rng_seed, i));
    out.s_norm[i] = normalize_counts(out.counts[i], shots_per_point, sc);
    out.timestamps_s[i] = static_cast<double>(i + 1) * point_time_s;
  });
  return out;
}

LineMeasurement measure_line(const scene::Scene& sc, double t_sense_K,
                             const Vec3& b_extra_G, double grid_center_MHz,
                             long long shots_per_point, std::uint64_t seed,
                             int n_points, double span_MHz) {
  if (n_points < 9) throw InvalidArgument("measure_line: need at least 9 grid points");
  if (!(span_MHz > 0.0)) throw InvalidArgument("measure_line: span_MHz must be > 0");
  if (shots_per_point <= 0) {
    throw InvalidArgument("measure_line: shots_per_point must be > 0");
  }

  const auto pair = sc.transitions_at(t_sense_K, b_extra_G);
  const std::array<double, 2> lines{pair.f_minus_MHz, pair.f_plus_MHz};

  LineMeasurement out;
  out.series.tag = "line_scan";
  out.series.rng_seed = seed;
  out.series.shots_per_point = shots_per_point;
  const std::size_t n = static_cast<std::size_t>(n_points);
  out.series.f_MHz.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.series.f_MHz[i] =
        grid_center_MHz + span_MHz * (static_cast<double>(i) / (n - 1.0) - 0.5);
  }
  const auto s_model = nvspin::odmr_spectrum(out.series.f_MHz, lines, sc.nv);

  const ReadoutModel readout = readout_of(sc);
  const double point_time_s =
      static_cast<double>(shots_per_point) * sc.seq.t_r_ns * kNsToS;
  out.series.counts.resize(n);
  out.series.s_norm.resize(n);
  out.series.timestamps_s.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.series.counts[i] =
        counts_for_signal(s_model[i], sc.seq.readout_window_ns, shots_per_point,
                          readout, rng::derive_stream(seed, i));
    out.series.s_norm[i] = normalize_counts(out.series.counts[i], shots_per_point, sc);
    out.series.timestamps_s[i] = static_cast<double>(i + 1) * point_time_s;
  }

  const bool hyperfine = sc.nv.hyperfine_split_MHz > 0.0;
  out.fit = fitters::fit_lorentzian_multi({out.series.f_MHz, out.series.s_norm}, 1,
                                          hyperfine, sc.nv.linewidth_MHz);
  out.center_MHz = out.fit.param("center_0");
  out.center_stderr_MHz = out.fit.stderr_of("center_0");
  return out;
}

CoolingScan run_cooling_scan(const scene::Scene& sc, std::span<const double> t_w_us,
                             double reference_t_w_us) {
  if (t_w_us.empty()) throw ConfigError("cooling: wait-time list is empty");
  if (!(sc.laser.amplitude_K > 0.0)) {
    throw ConfigError("cooling: scene has no laser heat source");
  }
  auto check_fit = [&](double wait_us) {
    if (padding_ns(sc.seq, wait_us * 1e3, 0.0) < 0.0) {
      std::ostringstream os;
      os << "cooling: wait " << wait_us << " us does not fit into t_r_ns = "
         << sc.seq.t_r_ns;
      throw ConfigError(os.str());
    }
  };
  check_fit(reference_t_w_us);
  for (double w : t_w_us) check_fit(w);

  const std::uint64_t op = op_seed(sc, StreamId::cooling, 0);
  const double t_base = sc.env.base_K;
  const double dfdT = sc.dfdT_at(t_base);

  const double excess_ref = sc.laser_excess_K(reference_t_w_us * 1e3);
  const auto reference =
      measure_line(sc, t_base + excess_ref, {}, sc.f_minus_at(t_base + excess_ref),
                   sc.shots, rng::derive_stream(op, 0));

  CoolingScan out;
  out.reference_t_w_us = reference_t_w_us;
  out.reference_center_MHz = reference.center_MHz;
  out.dfdT_MHz_per_K = dfdT;
  const std::size_t n = t_w_us.size();
  out.t_w_us.resize(n);
  out.center_MHz.resize(n);
  out.center_stderr_MHz.resize(n);
  out.dt_mK.resize(n);
  out.excess_true_mK.resize(n);

  parallel_for(n, sc.threads, [&](std::size_t i) {
    out.t_w_us[i] = t_w_us[i];
    if (t_w_us[i] == reference_t_w_us) {
      // the reference wait is its own measurement, so the difference is zero
      out.center_MHz[i] = reference.center_MHz;
      out.center_stderr_MHz[i] = reference.center_stderr_MHz;
    } else {
      const double excess = sc.laser_excess_K(t_w_us[i] * 1e3);
      const auto point =
          measure_line(sc, t_base + excess, {}, sc.f_minus_at(t_base + excess),
                       sc.shots, rng::derive_stream(op, i + 1));
      out.center_MHz[i] = point.center_MHz;
      out.center_stderr_MHz[i] = point.center_stderr_MHz;
    }
    out.dt_mK[i] = (out.center_MHz[i] - reference.center_MHz) / dfdT * 1e3;
    out.excess_true_mK[i] =
        (sc.laser_excess_K(t_w_us[i] * 1e3) - excess_ref) * 1e3;
  });
  return out;
}

FidScan run_fid_scan(const scene::Scene& sc, std::span<const double> tau_us) {
  if (tau_us.empty()) throw ConfigError("fid: tau list is empty");

  FidScan out;
  out.delta_f_MHz = sc.tracker.delta_f_MHz;
  out.shots_per_point = sc.shots;
  const std::size_t n = tau_us.size();
  out.tau_us.resize(n);
  out.pad_ns.resize(n);
  out.laser_on_ns.resize(n);
  out.counts.resize(n);
  out.s_norm.resize(n);

  for (double tau : tau_us) {
    if (tau < 0.0) throw ConfigError("fid: tau must be >= 0");
    if (padding_ns(sc.seq, sc.seq.t_w_ns, tau * 1e3) < 0.0) {
      std::ostringstream os;
      os << "fid: tau = " << tau << " us does not fit into t_r_ns = " << sc.seq.t_r_ns
         << " (laser " << sc.seq.laser_init_ns << " + wait " << sc.seq.t_w_ns
         << " + readout " << sc.seq.readout_window_ns << " ns)";
      throw ConfigError(os.str());
    }
  }

  // The drive is placed delta_f below the resonance sensed at the start of
  // free evolution; t_w is fixed, so every tau sees the same fringe frequency.
  const std::uint64_t op = op_seed(sc, StreamId::fid, 0);
  const ReadoutModel readout = readout_of(sc);
  parallel_for(n, sc.threads, [&](std::size_t i) {
    const double tau = tau_us[i];
    out.tau_us[i] = tau;
    out.pad_ns[i] = padding_ns(sc.seq, sc.seq.t_w_ns, tau * 1e3);
    out.laser_on_ns[i] = sc.seq.laser_init_ns;
    const double s_true = nvspin::fid_signal(tau, out.delta_f_MHz, sc.nv);
    out.counts[i] = counts_for_signal(s_true, sc.seq.readout_window_ns, sc.shots,
                                      readout, rng::derive_stream(op, i));
    out.s_norm[i] = normalize_counts(out.counts[i], sc.shots, sc);
  });
  return out;
}

TrackerRun run_realtime_tracker(const scene::Scene& sc, double duration_s,
                                double sample_s, double tau_fixed_us) {
  if (!(duration_s > 0.0)) throw ConfigError("tracker: duration_s must be > 0");
  if (!(sample_s > 0.0)) throw ConfigError("tracker: sample_s must be > 0");

  const double t_r_s = sc.seq.t_r_ns * kNsToS;
  const long long reps = static_cast<long long>(std::floor(sample_s / t_r_s));
  if (reps < 1) {
    throw ConfigError("tracker: sample_s is shorter than one repetition period");
  }

  TrackerRun out;
  out.reps_per_sample = reps;
  const double delta0 = sc.tracker.delta_f_MHz;
  out.tau_us = tau_fixed_us > 0.0
                   ? tau_fixed_us
                   : fitters::optimal_wait_us(sc.nv.contrast, sc.nv.t2_star_us,
                                              sc.nv.nu, delta0);
  if (padding_ns(sc.seq, sc.seq.t_w_ns, out.tau_us * 1e3) < 0.0) {
    std::ostringstream os;
    os << "tracker: tau = " << out.tau_us << " us does not fit into t_r_ns = "
       << sc.seq.t_r_ns;
    throw ConfigError(os.str());
  }

  out.s0 = nvspin::fid_signal(out.tau_us, delta0, sc.nv);
  out.responsivity_per_MHz = nvspin::fid_responsivity(out.tau_us, delta0, sc.nv);
  const double t_opt =
      fitters::optimal_wait_us(sc.nv.contrast, sc.nv.t2_star_us, sc.nv.nu, delta0);
  const double r_max = std::abs(nvspin::fid_responsivity(t_opt, delta0, sc.nv));
  if (std::abs(out.responsivity_per_MHz) < sc.tracker.min_responsivity_frac * r_max) {
    std::ostringstream os;
    os << "tracker: working-point responsivity " << std::abs(out.responsivity_per_MHz)
       << " /MHz is below " << sc.tracker.min_responsivity_frac << " of the maximum "
       << r_max << " /MHz at tau = " << t_opt
       << " us; move tau toward the optimum or recalibrate the working point";
    throw NumericError(os.str());
  }

  const double excess = sc.laser_excess_K(sc.seq.t_w_ns);
  const double t_work = sc.tracker.t_ref_K + excess;
  out.f_drive_MHz = sc.f_minus_at(t_work) - delta0;
  out.dfdT_MHz_per_K = sc.dfdT_at(sc.tracker.t_ref_K);

  const std::size_t n = static_cast<std::size_t>(std::floor(duration_s / sample_s));
  if (n == 0) throw ConfigError("tracker: duration_s is shorter than one sample");
  out.t_s.resize(n);
  out.s_norm.resize(n);
  out.delta_f_MHz.resize(n);
  out.t_est_K.resize(n);
  out.t_true_K.resize(n);

  const std::uint64_t op = op_seed(sc, StreamId::tracker, 0);
  const ReadoutModel readout = readout_of(sc);
  parallel_for(n, sc.threads, [&](std::size_t i) {
    const double t_mid = (static_cast<double>(i) + 0.5) * sample_s;
    const double t_env = sc.env.at(t_mid);
    const double delta_true = sc.f_minus_at(t_env + excess) - out.f_drive_MHz;
    const double s_true = nvspin::fid_signal(out.tau_us, delta_true, sc.nv);
    const long long counts =
        counts_for_signal(s_true, sc.seq.readout_window_ns, reps, readout,
                          rng::derive_stream(op, i));
    const double s_meas = normalize_counts(counts, reps, sc);
    const double delta_est = delta0 + (s_meas - out.s0) / out.responsivity_per_MHz;
    out.t_s[i] = t_mid;
    out.s_norm[i] = s_meas;
    out.delta_f_MHz[i] = delta_est;
    out.t_est_K[i] = sc.tracker.t_ref_K + (delta_est - delta0) / out.dfdT_MHz_per_K;
    out.t_true_K[i] = t_env;
  });
  return out;
}

HeaterRun run_chopped_dc(const scene::Scene& sc, bool reverse_polarity, int cycles,
                         double sample_s) {
  if (cycles < 1) throw ConfigError("heater: cycles must be >= 1");
  if (!(sample_s > 0.0)) throw ConfigError("heater: sample_s must be > 0");
  if (!(sc.stripline.amplitude_K > 0.0)) {
    throw ConfigError("heater: scene has no stripline heat source");
  }

  const int grid_points = 41;
  const double t_r_s = sc.seq.t_r_ns * kNsToS;
  const long long reps = static_cast<long long>(
      std::floor(sample_s / (t_r_s * static_cast<double>(grid_points))));
  if (reps < 1) {
    throw ConfigError("heater: sample_s is too short for a line scan per sample");
  }

  HeaterRun out;
  out.cycles = cycles;
  out.period_s = sc.stripline_period_s;

  thermal::HeatSource source = sc.stripline;
  source.waveform.periodic = true;
  source.waveform.segments = {{0.5 * out.period_s, 1.0},
                              {0.5 * out.period_s, reverse_polarity ? -1.0 : 0.0}};

  const double duration = static_cast<double>(cycles) * out.period_s;
  const std::size_t n = static_cast<std::size_t>(std::floor(duration / sample_s));
  if (n < 4) throw ConfigError("heater: fewer than 4 samples per run");
  std::vector<double> times(n);
  for (std::size_t i = 0; i < n; ++i) {
    times[i] = (static_cast<double>(i) + 0.5) * sample_s;
  }
  const auto trace = thermal::stripline_response(source, 1.0, sc.env.base_K, times);

  const double excess = sc.laser_excess_K(sc.seq.t_w_ns);
  out.f_ref_MHz = sc.f_minus_at(sc.env.base_K + excess);
  out.dfdT_MHz_per_K = sc.dfdT_at(sc.env.base_K);

  out.t_s = times;
  out.level.resize(n);
  out.f_MHz.resize(n);
  out.f_field_only_MHz.resize(n);
  out.dt_est_mK.resize(n);
  out.t_local_true_K.resize(n);

  const std::uint64_t op = op_seed(
      sc, reverse_polarity ? StreamId::heater_control : StreamId::heater, 0);
  parallel_for(n, sc.threads, [&](std::size_t i) {
    const double level = trace.b_wire_G[i];  // unit field scale, so this is the level
    const Vec3 b_extra = sc.stripline_field_G * level;
    const double t_sense = trace.t_local_K[i] + excess;
    const auto line = measure_line(sc, t_sense, b_extra, sc.f_minus_at(t_sense, b_extra),
                                   reps, rng::derive_stream(op, i), grid_points);
    const double field_shift =
        sc.f_minus_at(sc.env.base_K + excess, b_extra) - out.f_ref_MHz;
    out.level[i] = level;
    out.f_MHz[i] = line.center_MHz;
    out.f_field_only_MHz[i] = field_shift;
    out.dt_est_mK[i] = (line.center_MHz - out.f_ref_MHz - field_shift) /
                       out.dfdT_MHz_per_K * 1e3;
    out.t_local_true_K[i] = trace.t_local_K[i];
  });
  return out;
}

}  // namespace nvtherm::protocol
