#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nvtherm/nvspin.hpp"

namespace nvtherm::fitters {

struct FitResult {
  std::vector<std::string> names;
  std::vector<double> params;
  std::vector<double> stderr_proxy;  // sqrt(diag((J^T J)^-1) * residual variance)
  double residual_norm = 0.0;        // ||r|| at the accepted parameters
  double grad_inf_norm = 0.0;        // ||J^T r||_inf at the accepted parameters
  int iterations = 0;
  bool converged = false;
  bool warning = false;  // soft quality flag; message explains
  std::string message;

  [[nodiscard]] double param(const std::string& name) const;
  [[nodiscard]] double stderr_of(const std::string& name) const;
};

struct LmOptions {
  int max_iterations = 200;
  double param_tol = 1e-8;   // relative parameter change that counts as converged
  double lambda0 = 1e-3;     // initial damping
};

// Damped least squares with central-difference Jacobians and box projection.
// residual_fn fills r (size n_residuals) from p. Empty lo/hi mean unbounded.
FitResult lm_fit(const std::function<void(std::span<const double>, std::span<double>)>& residual_fn,
                 std::size_t n_residuals, std::vector<double> p0,
                 std::vector<std::string> names, std::vector<double> lo,
                 std::vector<double> hi, const LmOptions& options = {});

struct Spectrum {
  std::vector<double> f_MHz;
  std::vector<double> s;
};

// Baseline minus n_dips Lorentzian dips; initial centers come from smoothed
// local minima ranked by prominence (threshold 3x the noise MAD). With
// hyperfine = true every dip is a symmetric doublet sharing one splitting
// parameter and the reported centers are the doublet midpoints.
// Parameter layout: "baseline", ["hyperfine_split",] then per dip k:
// "center_k", "fwhm_k", "depth_k" with centers sorted ascending.
FitResult fit_lorentzian_multi(const Spectrum& spectrum, int n_dips, bool hyperfine,
                               double expected_fwhm_MHz = 0.0);

// Fringe model fit: params "contrast", "delta_f_MHz", "t2_star_us", "nu".
// Initial delta_f comes from a periodogram scan, t2 from the envelope decay.
// fix_nu freezes the exponent at nu_fixed.
FitResult fit_fid(std::span<const double> t_us, std::span<const double> s,
                  bool fix_nu = false, double nu_fixed = 2.0);

// y = amplitude * exp(-t/tau) + offset; params "amplitude", "tau", "offset".
// Sets the warning flag for non-decaying data or a span shorter than 3 tau.
FitResult fit_exponential(std::span<const double> t, std::span<const double> y);

struct SensitivityReport {
  // primary figure: jointly optimized over the wait time
  double eta_K_per_sqrtHz = 0.0;
  double t_optimal_us = 0.0;
  double ds_df_max_per_MHz = 0.0;
  // envelope-only convention (|sin| factor treated as saturated)
  double eta_envelope_K_per_sqrtHz = 0.0;
  double t_envelope_us = 0.0;
  double ds_df_envelope_per_MHz = 0.0;
  // echoed inputs
  double contrast = 0.0;
  double t2_star_us = 0.0;
  double nu = 0.0;
  double delta_f_MHz = 0.0;
  double l_eff_cps = 0.0;
  double dfdT_MHz_per_K = 0.0;
};

// Wait time maximizing |ds/d(delta_f)| over (0, 5 T2*]; dense scan plus
// golden-section refinement, lobe-aware for fast fringes.
double optimal_wait_us(double contrast, double t2_star_us, double nu, double delta_f_MHz);

// Shot-noise-limited temperature sensitivity:
//   eta = 1 / (sqrt(L_eff) * |df/dT| * |ds/df|_max).
SensitivityReport estimate_sensitivity(double contrast, double t2_star_us, double nu,
                                       double delta_f_MHz, double l_eff_cps,
                                       double dfdT_MHz_per_K);

struct IntegrationScaling {
  std::vector<double> window_s;
  std::vector<double> sigma_K;  // std dev of non-overlapping block means
  double slope = 0.0;           // d log(sigma) / d log(window)
  double eta_K_per_sqrtHz = 0.0;  // mean of sigma * sqrt(window)
};

// Block-averaged scatter vs integration window. The series must cover at
// least 10x the largest window (error names the required length).
IntegrationScaling stddev_vs_integration(std::span<const double> series_K, double dt_s,
                                         std::span<const double> windows_s);

struct TemperatureCalibration {
  std::vector<double> settings;  // ascending
  std::vector<double> d_MHz;
  std::vector<double> temps_K;
  bool monotonic_warning = false;  // D vs setting was not strictly monotonic

  // Linear interpolation between calibrated settings (edges extrapolate).
  [[nodiscard]] double temperature_at(double setting) const;
};

// Maps measured zero-field splittings to temperature through the linear
// D(T) model of the reference sensor.
TemperatureCalibration calibrate_temperature(
    std::span<const std::pair<double, double>> setting_and_d,
    const nvspin::NvParams& nv);

}  // namespace nvtherm::fitters
