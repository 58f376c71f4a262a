#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nvtherm/fitters.hpp"
#include "nvtherm/rng.hpp"
#include "nvtherm/scene.hpp"
#include "nvtherm/sequence.hpp"
#include "nvtherm/vec3.hpp"

namespace nvtherm::protocol {

struct ReadoutModel {
  double rate_bright_cps = 4.8e6;
  double rate_dark_cps = 3.504e6;
};

// One repetition: Poisson counts over the readout window at the rate set by
// the ms=0 population, mean [p0*rate_bright + (1-p0)*rate_dark] * window.
long long simulate_readout(double p0, double window_ns, const ReadoutModel& model,
                           rng::SplitMix64& gen);

// Photon sum over `shots` repetitions at normalized signal level s_norm
// (1 = full bright level). Drawn as one Poisson variate with the summed
// mean, which is exact for independent repetitions, and seeded locally so
// results do not depend on evaluation order.
long long counts_for_signal(double s_norm, double window_ns, long long shots,
                            const ReadoutModel& model, std::uint64_t seed);

// Counter-based seed for an acquisition unit; distinct (master, index) pairs
// give distinct streams.
std::uint64_t derive_shot_seed(std::uint64_t master_seed, std::uint64_t shot_index);

// Fixed per-experiment stream offsets so different protocols never share a
// photon stream even under one master seed.
enum class StreamId : std::uint64_t {
  odmr = 1,
  cooling = 2,
  fid = 3,
  tracker = 4,
  heater = 5,
  heater_control = 6,
  calibrate = 7,
};

// Runs body(0..n-1) on up to `threads` workers. Callers write results into
// preallocated slots by index, so the outcome is independent of scheduling.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

struct ShotSeries {
  std::string tag;
  std::uint64_t rng_seed = 0;  // stream seed this series was drawn from
  long long shots_per_point = 0;
  std::vector<double> timestamps_s;  // cumulative acquisition time per point
  std::vector<double> f_MHz;         // probe frequency axis
  std::vector<long long> counts;
  std::vector<double> s_norm;
};

// Pulsed ODMR sweep at a fixed environment temperature. The spin is sensed
// at the temperature reached t_w after the laser edge (environment plus
// quasi-steady laser self-heating); the dip pattern includes both spin
// transitions and any configured hyperfine doublet.
ShotSeries run_pulsed_odmr(const scene::Scene& sc, std::span<const double> f_list_MHz,
                           double t_env_K, long long shots_per_point,
                           StreamId stream = StreamId::odmr, std::uint64_t salt = 0);

struct LineMeasurement {
  ShotSeries series;
  fitters::FitResult fit;
  double center_MHz = 0.0;
  double center_stderr_MHz = 0.0;
};

// Short single-dip scan around a predicted line position: a probe grid of
// n_points spanning span_MHz, shot-noise sampled and fitted with one
// Lorentzian. The physics (line position) comes from t_sense_K and the extra
// applied field; the grid center is only a search window.
LineMeasurement measure_line(const scene::Scene& sc, double t_sense_K,
                             const Vec3& b_extra_G, double grid_center_MHz,
                             long long shots_per_point, std::uint64_t seed,
                             int n_points = 41, double span_MHz = 5.0);

struct CoolingScan {
  std::vector<double> t_w_us;
  std::vector<double> center_MHz;
  std::vector<double> center_stderr_MHz;
  std::vector<double> dt_mK;          // inferred excess relative to the reference wait
  std::vector<double> excess_true_mK; // model excess, for comparison columns
  double reference_t_w_us = 0.0;
  double reference_center_MHz = 0.0;
  double dfdT_MHz_per_K = 0.0;
};

// Laser self-heating decay versus wait time: measures the line at each t_w
// and converts the shift against the long-wait reference into temperature
// through the local transduction slope.
CoolingScan run_cooling_scan(const scene::Scene& sc, std::span<const double> t_w_us,
                             double reference_t_w_us);

struct FidScan {
  std::vector<double> tau_us;
  std::vector<double> pad_ns;       // idle time that keeps t_r constant
  std::vector<double> laser_on_ns;  // constant across the scan by construction
  std::vector<long long> counts;
  std::vector<double> s_norm;
  double delta_f_MHz = 0.0;  // fringe frequency realized by the drive choice
  long long shots_per_point = 0;
};

// Ramsey fringe versus free-evolution time at fixed t_w and fixed t_r; the
// drive sits tracker.delta_f_MHz below the sensed resonance. Throws when a
// requested tau does not fit into the repetition period.
FidScan run_fid_scan(const scene::Scene& sc, std::span<const double> tau_us);

struct TrackerRun {
  std::vector<double> t_s;  // sample midpoints
  std::vector<double> s_norm;
  std::vector<double> delta_f_MHz;
  std::vector<double> t_est_K;
  std::vector<double> t_true_K;  // environment schedule at the sample midpoint
  double tau_us = 0.0;
  double f_drive_MHz = 0.0;
  double s0 = 0.0;                    // working-point signal level
  double responsivity_per_MHz = 0.0;  // ds/df at the working point
  double dfdT_MHz_per_K = 0.0;
  long long reps_per_sample = 0;
};

// Real-time thermometry: counts accumulated over each sample interval at a
// fixed wait are inverted to temperature through the first-order responsivity
// at the working point. tau_fixed_us == 0 picks the joint optimum. Throws
// when the working-point responsivity falls below the configured fraction of
// the global maximum.
TrackerRun run_realtime_tracker(const scene::Scene& sc, double duration_s,
                                double sample_s, double tau_fixed_us);

struct HeaterRun {
  std::vector<double> t_s;  // sample midpoints
  std::vector<double> level;
  std::vector<double> f_MHz;             // fitted line position
  std::vector<double> f_field_only_MHz;  // model shift from the wire field alone
  std::vector<double> dt_est_mK;         // field-subtracted temperature excess
  std::vector<double> t_local_true_K;
  double dfdT_MHz_per_K = 0.0;
  double f_ref_MHz = 0.0;
  int cycles = 0;
  double period_s = 0.0;
};

// Chopped-current experiment: the wire field follows the drive instantly
// while the local temperature relaxes slowly; the tracked line position is
// fitted per sample and the configured field step is subtracted to isolate
// the thermal drift. reverse_polarity alternates the current sign instead of
// gating it, which holds |level| (and so the heating) constant.
HeaterRun run_chopped_dc(const scene::Scene& sc, bool reverse_polarity, int cycles,
                         double sample_s);

}  // namespace nvtherm::protocol
