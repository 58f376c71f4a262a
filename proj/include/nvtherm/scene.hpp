#pragma once

#include <cstdint>

#include "nvtherm/config.hpp"
#include "nvtherm/magnet.hpp"
#include "nvtherm/nvspin.hpp"
#include "nvtherm/sequence.hpp"
#include "nvtherm/thermal.hpp"
#include "nvtherm/vec3.hpp"

namespace nvtherm::scene {

// Environment temperature vs time: a base level plus an optional square
// modulation that adds `square_amplitude_K` during the second half of each
// period (step up, step back).
struct EnvironmentSchedule {
  double base_K = 311.0;
  double square_amplitude_K = 0.0;
  double square_period_s = 0.0;  // 0 disables the modulation

  [[nodiscard]] double at(double t_s) const;
};

// Working point of the real-time thermometer. The drive sits delta_f below
// the resonance at t_ref, so the fringe frequency equals delta_f there and
// moves linearly with temperature through df/dT.
struct TrackerConfig {
  double tau_us = 0.0;               // fixed FID wait; 0 picks the responsivity optimum
  double delta_f_MHz = 2.7;          // fringe frequency at the reference temperature
  double t_ref_K = 311.0;
  double sample_s = 0.005;           // counts accumulated per emitted estimate
  double duration_s = 30.0;
  double min_responsivity_frac = 0.05;  // of the global |ds/df| maximum
};

// Everything one experiment needs: transducer, spin, timing, readout rates,
// heat sources and RNG provenance. Immutable during a run.
struct Scene {
  magnet::MnpModel mnp;        // m_sat == 0 disables the particle
  nvspin::NvParams nv;
  Vec3 b_ext_G{0.0, 0.0, 192.0};
  protocol::PulseSequence seq;
  thermal::HeatSource laser;      // amplitude_K == 0 disables self-heating
  thermal::HeatSource stripline;  // used by the heater experiment only
  Vec3 stripline_field_G{0.0, 0.0, 0.5};  // wire field at drive level 1
  double stripline_period_s = 8.0;        // chop period (half on, half off)
  double rate_bright_cps = 4.8e6;
  double rate_dark_cps = 3.504e6;
  EnvironmentSchedule env;
  TrackerConfig tracker;
  std::uint64_t master_seed = 1;
  long long shots = 1000000;  // repetitions per acquisition point
  int threads = 1;

  // Both spin transitions with the dipole contribution at temperature t_K;
  // b_extra_G adds to the applied field (stripline contribution).
  [[nodiscard]] nvspin::TransitionPair transitions_at(double t_K,
                                                      const Vec3& b_extra_G = {}) const;
  [[nodiscard]] double f_minus_at(double t_K, const Vec3& b_extra_G = {}) const;

  // Transduction slope df_minus/dT at t_K, MHz/K.
  [[nodiscard]] double dfdT_at(double t_K) const;

  // Quasi-steady laser-heating excess (K) a given time after the laser edge.
  [[nodiscard]] double laser_excess_K(double t_after_laser_ns) const;

  // Photons per second entering the sensitivity formula:
  // rate_bright * readout_window / t_r.
  [[nodiscard]] double effective_rate_cps() const;

  void validate() const;  // throws ConfigError with field-level messages
};

// Builds and validates a Scene from a parsed config, running the transducer
// calibration when [magnet.calibration] requests a target slope.
Scene build_scene(const config::Config& cfg);

}  // namespace nvtherm::scene
