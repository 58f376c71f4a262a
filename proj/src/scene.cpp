#include "nvtherm/scene.hpp"

#include <cmath>
#include <sstream>

#include "nvtherm/errors.hpp"

namespace nvtherm::protocol {

void PulseSequence::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("sequence: " + msg);
  };
  need(laser_init_ns >= 0.0, "laser_init_ns must be >= 0");
  need(t_w_ns >= 0.0, "t_w_ns must be >= 0");
  need(readout_window_ns > 0.0, "readout_window_ns must be > 0");
  need(t_r_ns > 0.0, "t_r_ns must be > 0");
  for (const auto& op : mw_ops) {
    need(op.delay_after_ns >= 0.0, "mw delay_after_ns must be >= 0");
    need(op.f_p_MHz >= 0.0, "mw carrier frequency must be >= 0");
  }
  const double used = laser_init_ns + t_w_ns + mw_total_ns() + readout_window_ns;
  if (used > t_r_ns * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "sequence: pieces need " << used << " ns but t_r_ns is " << t_r_ns;
    throw ConfigError(os.str());
  }
}

}  // namespace nvtherm::protocol

namespace nvtherm::scene {

double EnvironmentSchedule::at(double t_s) const {
  if (square_period_s <= 0.0 || square_amplitude_K == 0.0) return base_K;
  double phase = std::fmod(t_s, square_period_s);
  if (phase < 0.0) phase += square_period_s;
  return phase < 0.5 * square_period_s ? base_K : base_K + square_amplitude_K;
}

nvspin::TransitionPair Scene::transitions_at(double t_K, const Vec3& b_extra_G) const {
  const Vec3 b_applied = b_ext_G + b_extra_G;
  const auto sample = magnet::field_at_nv(t_K, b_applied, mnp, nv.axis);
  return nvspin::transition_frequencies(nvspin::d_of_temperature(t_K, nv),
                                        sample.b_total_G, nv);
}

double Scene::f_minus_at(double t_K, const Vec3& b_extra_G) const {
  return transitions_at(t_K, b_extra_G).f_minus_MHz;
}

double Scene::dfdT_at(double t_K) const {
  return magnet::susceptibility_dfdT(t_K, b_ext_G, mnp, nv);
}

double Scene::laser_excess_K(double t_after_laser_ns) const {
  if (laser.amplitude_K == 0.0) return 0.0;
  return thermal::steady_excess_K(seq, laser, t_after_laser_ns);
}

double Scene::effective_rate_cps() const {
  return rate_bright_cps * seq.readout_window_ns / seq.t_r_ns;
}

void Scene::validate() const {
  nv.validate();
  mnp.validate();
  seq.validate();
  if (!(rate_bright_cps > 0.0) || !(rate_dark_cps > 0.0) ||
      rate_dark_cps >= rate_bright_cps) {
    throw ConfigError("readout: need rate_bright_cps > rate_dark_cps > 0");
  }
  const double implied = (rate_bright_cps - rate_dark_cps) / rate_bright_cps;
  if (std::abs(implied - nv.contrast) > 1e-6) {
    std::ostringstream os;
    os << "readout: rates imply contrast " << implied << " but nv.contrast is "
       << nv.contrast;
    throw ConfigError(os.str());
  }
  if (!(env.base_K > 0.0)) throw ConfigError("environment: t_base_K must be > 0");
  if (env.square_period_s < 0.0) {
    throw ConfigError("environment: square_period_s must be >= 0");
  }
  if (laser.amplitude_K < 0.0) throw ConfigError("laser: amplitude_K must be >= 0");
  if (laser.amplitude_K > 0.0 && !(laser.tau_s > 0.0)) {
    throw ConfigError("laser: tau_us must be > 0");
  }
  if (stripline.amplitude_K < 0.0) {
    throw ConfigError("stripline: amplitude_K must be >= 0");
  }
  if (stripline.amplitude_K > 0.0 && !(stripline.tau_s > 0.0)) {
    throw ConfigError("stripline: tau_s must be > 0");
  }
  if (!(stripline_period_s > 0.0)) {
    throw ConfigError("stripline: chop_period_s must be > 0");
  }
  if (!(tracker.tau_us >= 0.0)) throw ConfigError("tracker: tau_us must be >= 0");
  if (!(tracker.delta_f_MHz > 0.0)) {
    throw ConfigError("tracker: delta_f_MHz must be > 0");
  }
  if (!(tracker.sample_s > 0.0)) throw ConfigError("tracker: sample_s must be > 0");
  if (!(tracker.duration_s > 0.0)) throw ConfigError("tracker: duration_s must be > 0");
  if (!(tracker.t_ref_K > 0.0)) throw ConfigError("tracker: t_ref_K must be > 0");
  if (!(tracker.min_responsivity_frac >= 0.0 && tracker.min_responsivity_frac <= 1.0)) {
    throw ConfigError("tracker: min_responsivity_frac must be in [0, 1]");
  }
  if (shots <= 0) throw ConfigError("scene: shots must be > 0");
  if (threads <= 0) throw ConfigError("scene: threads must be > 0");
}

namespace {

Vec3 unit_or_throw(const Vec3& v, const std::string& key) {
  const double n = norm(v);
  if (!(n > 0.0)) throw ConfigError(key + ": vector must be non-zero");
  return v * (1.0 / n);
}

std::uint64_t seed_from(const config::Config& cfg) {
  const double raw = cfg.number_or("scene.seed", 1.0);
  if (raw < 0.0) throw ConfigError("scene.seed: must be >= 0");
  return static_cast<std::uint64_t>(raw);
}

}  // namespace

Scene build_scene(const config::Config& cfg) {
  Scene s;

  s.nv.d_zfs0_MHz = cfg.number_or("nv.d_zfs0_MHz", s.nv.d_zfs0_MHz);
  s.nv.t0_K = cfg.number_or("nv.t0_K", s.nv.t0_K);
  s.nv.dD_dT_MHz_per_K = cfg.number_or("nv.dD_dT_MHz_per_K", s.nv.dD_dT_MHz_per_K);
  s.nv.gamma_e_MHz_per_G = cfg.number_or("nv.gamma_e_MHz_per_G", s.nv.gamma_e_MHz_per_G);
  s.nv.axis = unit_or_throw(cfg.vec3_or("nv.axis", s.nv.axis), "nv.axis");
  s.nv.t2_star_us = cfg.number_or("nv.t2_star_us", s.nv.t2_star_us);
  s.nv.contrast = cfg.number_or("nv.contrast", s.nv.contrast);
  s.nv.nu = cfg.number_or("nv.nu", s.nv.nu);
  s.nv.hyperfine_split_MHz = cfg.number_or("nv.hyperfine_split_MHz", s.nv.hyperfine_split_MHz);
  s.nv.linewidth_MHz = cfg.number_or("nv.linewidth_MHz", s.nv.linewidth_MHz);

  s.mnp.t_curie_K = cfg.number_or("magnet.t_curie_K", s.mnp.t_curie_K);
  s.mnp.m_sat_Am2 = cfg.number_or("magnet.m_sat_Am2", s.mnp.m_sat_Am2);
  s.mnp.position_m = cfg.vec3_or("magnet.position_m", s.mnp.position_m);
  s.mnp.easy_axis = unit_or_throw(cfg.vec3_or("magnet.easy_axis", s.mnp.easy_axis),
                                  "magnet.easy_axis");
  s.mnp.field_coupling_K_per_G =
      cfg.number_or("magnet.field_coupling_K_per_G", s.mnp.field_coupling_K_per_G);
  if (!cfg.boolean_or("magnet.enabled", true)) s.mnp.m_sat_Am2 = 0.0;

  s.b_ext_G = cfg.vec3_or("field.b_ext_G", s.b_ext_G);

  s.seq.laser_init_ns = cfg.number_or("sequence.laser_init_ns", s.seq.laser_init_ns);
  s.seq.t_w_ns = cfg.number_or("sequence.t_w_ns", s.seq.t_w_ns);
  s.seq.readout_window_ns =
      cfg.number_or("sequence.readout_window_ns", s.seq.readout_window_ns);
  s.seq.t_r_ns = cfg.number_or("sequence.t_r_ns", s.seq.t_r_ns);

  s.rate_bright_cps = cfg.number_or("readout.rate_bright_cps", s.rate_bright_cps);
  s.rate_dark_cps = cfg.number_or("readout.rate_dark_cps", s.rate_dark_cps);

  s.env.base_K = cfg.number_or("environment.t_base_K", s.env.base_K);
  s.env.square_amplitude_K =
      cfg.number_or("environment.square_amplitude_K", s.env.square_amplitude_K);
  s.env.square_period_s =
      cfg.number_or("environment.square_period_s", s.env.square_period_s);

  s.laser.kind = thermal::SourceKind::laser_pulse;
  s.laser.amplitude_K = cfg.number_or("laser.amplitude_K", 0.044327);
  s.laser.tau_s = cfg.number_or("laser.tau_us", 0.5) * 1e-6;

  s.stripline.kind = thermal::SourceKind::stripline_dc;
  s.stripline.amplitude_K = cfg.number_or("stripline.amplitude_K", 0.010);
  s.stripline.tau_s = cfg.number_or("stripline.tau_s", 1.0);
  s.stripline_field_G = cfg.vec3_or("stripline.field_step_G", s.stripline_field_G);
  s.stripline_period_s = cfg.number_or("stripline.chop_period_s", s.stripline_period_s);

  s.tracker.tau_us = cfg.number_or("tracker.tau_us", s.tracker.tau_us);
  s.tracker.delta_f_MHz = cfg.number_or("tracker.delta_f_MHz", s.tracker.delta_f_MHz);
  s.tracker.t_ref_K = cfg.number_or("tracker.t_ref_K", s.env.base_K);
  s.tracker.sample_s = cfg.number_or("tracker.sample_s", s.tracker.sample_s);
  s.tracker.duration_s = cfg.number_or("tracker.duration_s", s.tracker.duration_s);
  s.tracker.min_responsivity_frac =
      cfg.number_or("tracker.min_responsivity_frac", s.tracker.min_responsivity_frac);

  s.master_seed = seed_from(cfg);
  const double shots = cfg.number_or("scene.shots", static_cast<double>(s.shots));
  if (!(shots >= 1.0)) throw ConfigError("scene.shots: must be >= 1");
  s.shots = static_cast<long long>(shots);
  const double threads = cfg.number_or("scene.threads", 1.0);
  if (!(threads >= 1.0)) throw ConfigError("scene.threads: must be >= 1");
  s.threads = static_cast<int>(threads);

  s.validate();

  const double target = cfg.number_or("magnet.calibration.target_dfdT_MHz_per_K", 0.0);
  if (target > 0.0) {
    const double t_peak = cfg.number_or("magnet.calibration.t_peak_K", s.env.base_K);
    s.mnp = magnet::calibrate_transducer(target, t_peak, s.b_ext_G, s.mnp, s.nv);
  }
  return s;
}

}  // namespace nvtherm::scene
