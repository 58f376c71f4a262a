#pragma once

#include <span>
#include <utility>
#include <vector>

#include "nvtherm/sequence.hpp"

namespace nvtherm::thermal {

// Piecewise-constant drive level vs time. Levels are dimensionless (1 = the
// source's reference drive); signed levels model current polarity.
struct Waveform {
  struct Segment {
    double duration_s = 0.0;
    double level = 0.0;
  };
  std::vector<Segment> segments;
  bool periodic = false;

  [[nodiscard]] double period_s() const;
  // Level at absolute time t; 0 past the end of a non-periodic waveform.
  [[nodiscard]] double level_at(double t_s) const;
  // Segment-boundary times in (t0, t1), ascending.
  [[nodiscard]] std::vector<double> transitions_between(double t0_s, double t1_s) const;
  void validate() const;
};

enum class SourceKind { laser_pulse, stripline_dc };

struct HeatSource {
  SourceKind kind = SourceKind::laser_pulse;
  double amplitude_K = 0.0;  // steady-state excess at |level| = 1
  double tau_s = 0.0;        // relaxation time constant
  Waveform waveform;
};

// Lumped local temperature around the sensing volume. Relaxes toward
// t_env + sum of active source targets; the time constant is the fastest tau
// among the currently driving sources, or among all sources when none drive
// (heat leaves through the same dominant link it entered by).
struct ThermalState {
  double t_local_K = 0.0;
  double t_env_K = 0.0;
  double time_s = 0.0;
};

// Exact exponential update over dt, split at every waveform transition.
ThermalState step(ThermalState state, double dt_s, std::span<const HeatSource> sources);

// Quasi-steady excess temperature (K above t_env) a time t_after_laser_ns
// past the falling laser edge, once the pulse train response is periodic to
// better than 0.1% period over period. Throws ConfigError for t_r == 0.
double steady_excess_K(const protocol::PulseSequence& seq, const HeatSource& laser,
                       double t_after_laser_ns);

// One steady period of the pulse-train response, sampled densely:
// (time within period in ns, local temperature K). t_env enters only as an
// offset; transients are run until the period-over-period change is < 0.1%.
std::vector<std::pair<double, double>> pulse_train_response(
    const protocol::PulseSequence& seq, const HeatSource& laser, double t_env_K,
    int samples_per_period = 400);

struct StriplineTrace {
  std::vector<double> t_s;
  std::vector<double> t_local_K;
  std::vector<double> b_wire_G;  // field_per_unit * level(t), instantaneous
};

// Joint thermal/field response to a current waveform in a wire near the
// sensor. The field follows the level with no lag; only |level| heats.
StriplineTrace stripline_response(const HeatSource& stripline, double field_per_unit_G,
                                  double t_env_K, std::span<const double> sample_times_s);

}  // namespace nvtherm::thermal
