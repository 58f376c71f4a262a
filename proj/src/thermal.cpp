#include "nvtherm/thermal.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nvtherm/errors.hpp"

namespace nvtherm::thermal {

namespace {

constexpr double kSettleRelTol = 1e-3;  // period-over-period change considered steady

double clamp_nonneg(double v) { return v < 0.0 ? 0.0 : v; }

}  // namespace

double Waveform::period_s() const {
  double p = 0.0;
  for (const auto& seg : segments) p += seg.duration_s;
  return p;
}

double Waveform::level_at(double t_s) const {
  const double period = period_s();
  if (segments.empty() || period <= 0.0) return 0.0;
  double t = t_s;
  if (periodic) {
    t = std::fmod(t, period);
    if (t < 0.0) t += period;
  } else if (t < 0.0 || t >= period) {
    return 0.0;
  }
  double edge = 0.0;
  for (const auto& seg : segments) {
    edge += seg.duration_s;
    if (t < edge) return seg.level;
  }
  return segments.back().level;
}

std::vector<double> Waveform::transitions_between(double t0_s, double t1_s) const {
  std::vector<double> out;
  const double period = period_s();
  if (segments.empty() || period <= 0.0 || t1_s <= t0_s) return out;

  if (periodic) {
    double base = std::floor(t0_s / period) * period;
    for (double start = base; start < t1_s; start += period) {
      double edge = start;
      for (const auto& seg : segments) {
        edge += seg.duration_s;
        if (edge > t0_s && edge < t1_s) out.push_back(edge);
      }
    }
  } else {
    double edge = 0.0;
    for (const auto& seg : segments) {
      edge += seg.duration_s;
      if (edge > t0_s && edge < t1_s) out.push_back(edge);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void Waveform::validate() const {
  if (segments.empty()) throw ConfigError("waveform: needs at least one segment");
  for (const auto& seg : segments) {
    if (!(seg.duration_s > 0.0)) throw ConfigError("waveform: segment durations must be > 0");
  }
}

ThermalState step(ThermalState state, double dt_s, std::span<const HeatSource> sources) {
  if (dt_s < 0.0) throw InvalidArgument("thermal::step: dt_s must be >= 0");
  const double t_end = state.time_s + dt_s;
  if (sources.empty() || dt_s == 0.0) {
    state.time_s = t_end;
    return state;
  }

  std::vector<double> cuts;
  for (const auto& src : sources) {
    auto tr = src.waveform.transitions_between(state.time_s, t_end);
    cuts.insert(cuts.end(), tr.begin(), tr.end());
  }
  cuts.push_back(t_end);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  double t = state.time_s;
  for (double cut : cuts) {
    const double span = cut - t;
    if (span <= 0.0) continue;
    const double probe = t + span / 2.0;

    double target = state.t_env_K;
    double tau_active = 0.0;
    double tau_all = 0.0;
    for (const auto& src : sources) {
      const double level = src.waveform.level_at(probe);
      tau_all = tau_all == 0.0 ? src.tau_s : std::min(tau_all, src.tau_s);
      if (level != 0.0) {
        target += src.amplitude_K * std::fabs(level);
        tau_active = tau_active == 0.0 ? src.tau_s : std::min(tau_active, src.tau_s);
      }
    }
    const double tau = tau_active > 0.0 ? tau_active : tau_all;
    if (tau > 0.0) {
      state.t_local_K = target + (state.t_local_K - target) * std::exp(-span / tau);
    } else {
      state.t_local_K = target;
    }
    t = cut;
  }
  state.time_s = t_end;
  return state;
}

namespace {

// Runs the train until the sampled profile repeats to kSettleRelTol, then
// returns the state at the start of a steady period.
ThermalState settle_train(const protocol::PulseSequence& seq, const HeatSource& laser,
                          double t_env_K) {
  if (!(seq.t_r_ns > 0.0)) {
    throw ConfigError("pulse train: repetition period t_r_ns must be > 0 for a periodic train");
  }
  if (!(seq.laser_init_ns > 0.0) || seq.laser_init_ns >= seq.t_r_ns) {
    throw ConfigError("pulse train: laser_init_ns must lie in (0, t_r_ns)");
  }

  HeatSource src = laser;
  src.waveform.segments = {{seq.laser_init_ns * 1e-9, 1.0},
                           {(seq.t_r_ns - seq.laser_init_ns) * 1e-9, 0.0}};
  src.waveform.periodic = true;

  ThermalState state{t_env_K, t_env_K, 0.0};
  const double period = seq.t_r_ns * 1e-9;
  const std::span<const HeatSource> span(&src, 1);

  double prev_peak = 0.0;
  for (int k = 0; k < 100000; ++k) {
    state = step(state, src.waveform.segments[0].duration_s, span);
    const double peak = state.t_local_K - t_env_K;
    state = step(state, src.waveform.segments[1].duration_s, span);
    const double scale = std::max(std::fabs(peak), 1e-30);
    if (k > 0 && std::fabs(peak - prev_peak) / scale < kSettleRelTol) {
      return state;
    }
    prev_peak = peak;
  }
  std::ostringstream os;
  os << "pulse train: no steady state after 1e5 periods (tau " << laser.tau_s
     << " s vs period " << period << " s)";
  throw NumericError(os.str());
}

}  // namespace

double steady_excess_K(const protocol::PulseSequence& seq, const HeatSource& laser,
                       double t_after_laser_ns) {
  if (t_after_laser_ns < 0.0) {
    throw InvalidArgument("steady_excess_K: t_after_laser_ns must be >= 0");
  }
  if (seq.laser_init_ns + t_after_laser_ns > seq.t_r_ns) {
    std::ostringstream os;
    os << "steady_excess_K: laser_init_ns + t_after (" << seq.laser_init_ns + t_after_laser_ns
       << " ns) exceeds t_r_ns (" << seq.t_r_ns << " ns)";
    throw ConfigError(os.str());
  }

  const double t_env = 300.0;  // offsets cancel; any reference works
  ThermalState state = settle_train(seq, laser, t_env);

  HeatSource src = laser;
  src.waveform.segments = {{seq.laser_init_ns * 1e-9, 1.0},
                           {(seq.t_r_ns - seq.laser_init_ns) * 1e-9, 0.0}};
  src.waveform.periodic = true;
  // settle_train leaves the clock at a period boundary (laser rising edge)
  state = step(state, (seq.laser_init_ns + t_after_laser_ns) * 1e-9, std::span(&src, 1));
  return clamp_nonneg(state.t_local_K - t_env);
}

std::vector<std::pair<double, double>> pulse_train_response(
    const protocol::PulseSequence& seq, const HeatSource& laser, double t_env_K,
    int samples_per_period) {
  if (samples_per_period < 2) {
    throw InvalidArgument("pulse_train_response: samples_per_period must be >= 2");
  }
  ThermalState state = settle_train(seq, laser, t_env_K);

  HeatSource src = laser;
  src.waveform.segments = {{seq.laser_init_ns * 1e-9, 1.0},
                           {(seq.t_r_ns - seq.laser_init_ns) * 1e-9, 0.0}};
  src.waveform.periodic = true;

  std::vector<std::pair<double, double>> out;
  out.reserve(static_cast<size_t>(samples_per_period));
  const double dt = seq.t_r_ns * 1e-9 / samples_per_period;
  for (int i = 0; i < samples_per_period; ++i) {
    state = step(state, dt, std::span(&src, 1));
    out.emplace_back((i + 1) * dt * 1e9, state.t_local_K);
  }
  return out;
}

StriplineTrace stripline_response(const HeatSource& stripline, double field_per_unit_G,
                                  double t_env_K, std::span<const double> sample_times_s) {
  stripline.waveform.validate();
  StriplineTrace trace;
  trace.t_s.reserve(sample_times_s.size());
  trace.t_local_K.reserve(sample_times_s.size());
  trace.b_wire_G.reserve(sample_times_s.size());

  ThermalState state{t_env_K, t_env_K, 0.0};
  const std::span<const HeatSource> span(&stripline, 1);
  double prev = 0.0;
  for (double t : sample_times_s) {
    if (t < prev) throw InvalidArgument("stripline_response: sample times must be ascending");
    state = step(state, t - prev, span);
    prev = t;
    trace.t_s.push_back(t);
    trace.t_local_K.push_back(state.t_local_K);
    trace.b_wire_G.push_back(field_per_unit_G * stripline.waveform.level_at(t));
  }
  return trace;
}

}  // namespace nvtherm::thermal
