#include "nvtherm/magnet.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nvtherm/errors.hpp"

namespace nvtherm::magnet {

namespace {

constexpr double kResidualAccept = 1e-10;
constexpr double kFdStepK = 0.010;  // full central-difference step for df/dT

void require(bool ok, const char* field, const char* what) {
  if (!ok) {
    std::ostringstream os;
    os << "magnet." << field << ": " << what;
    throw ConfigError(os.str());
  }
}

double self_consistency(double m, double t_K, double tc, double h_K) {
  return m - std::tanh((tc * m + h_K) / t_K);
}

struct Peak {
  double t_K = 0.0;
  double dfdT = 0.0;  // signed value at the peak of |df/dT|
};

Peak find_susceptibility_peak(const MnpModel& model, const Vec3& b_ext_G,
                              const nvspin::NvParams& nv) {
  auto mag = [&](double t) { return std::fabs(susceptibility_dfdT(t, b_ext_G, model, nv)); };

  // Coarse scan around the transition, extended if the maximum sits on an
  // edge (the peak tracks t_curie but is not exactly there).
  double lo = model.t_curie_K - 10.0;
  double hi = model.t_curie_K + 10.0;
  double best_t = model.t_curie_K;
  for (int attempt = 0; attempt < 8; ++attempt) {
    constexpr int n = 401;
    double best_v = -1.0;
    int best_i = 0;
    for (int i = 0; i < n; ++i) {
      double t = lo + (hi - lo) * i / (n - 1);
      double v = mag(t);
      if (v > best_v) {
        best_v = v;
        best_i = i;
      }
    }
    best_t = lo + (hi - lo) * best_i / (n - 1);
    if (best_i > 0 && best_i < n - 1) break;
    double span = hi - lo;
    if (best_i == 0) {
      lo -= span;
      hi -= span / 2;
    } else {
      lo += span / 2;
      hi += span;
    }
  }

  // Golden-section refinement of the bracketing cell.
  const double step = (hi - lo) / 400.0;
  double a = best_t - step;
  double b = best_t + step;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - gr * (b - a);
  double x2 = a + gr * (b - a);
  double f1 = mag(x1);
  double f2 = mag(x2);
  while (b - a > 1e-5) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = mag(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = mag(x1);
    }
  }
  double t_star = 0.5 * (a + b);
  return {t_star, susceptibility_dfdT(t_star, b_ext_G, model, nv)};
}

}  // namespace

void MnpModel::validate() const {
  require(t_curie_K > 0, "t_curie_K", "must be > 0");
  require(m_sat_Am2 >= 0, "m_sat_Am2", "must be >= 0");
  require(norm(position_m) > 0, "position_m", "must have non-zero length");
  require(std::fabs(norm(easy_axis) - 1.0) < 1e-12, "easy_axis", "must be unit norm");
  require(field_coupling_K_per_G >= 0, "field_coupling_K_per_G", "must be >= 0");
}

ReducedMagnetization solve_magnetization(double t_K, double b_ext_G, const MnpModel& model) {
  if (!(t_K > 0)) throw InvalidArgument("solve_magnetization: t_K must be > 0");
  if (b_ext_G < 0) throw InvalidArgument("solve_magnetization: b_ext_G must be >= 0");

  const double tc = model.t_curie_K;
  const double h_K = model.field_coupling_K_per_G * b_ext_G;
  if (h_K == 0.0 && t_K >= tc) return {0.0, 0.0};

  // Damped fixed point from the saturated side; iterates stay above the
  // largest root, so the final iterate doubles as the upper bisection bracket.
  double m = 1.0;
  const double alpha = 1.0;
  for (int it = 0; it < 400; ++it) {
    double next = m + alpha * (std::tanh((tc * m + h_K) / t_K) - m);
    if (std::fabs(next - m) < 5e-16) {
      m = next;
      break;
    }
    m = next;
  }

  double residual = std::fabs(self_consistency(m, t_K, tc, h_K));
  if (residual > 1e-12) {
    double hi = std::min(1.0, m + 1e-12);
    double lo = h_K > 0.0 ? 0.0 : 1e-12;
    if (self_consistency(lo, t_K, tc, h_K) >= 0.0 || self_consistency(hi, t_K, tc, h_K) < 0.0) {
      std::ostringstream os;
      os << "solve_magnetization: lost the bracket at T=" << t_K << " K, residual " << residual;
      throw NumericError(os.str());
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      double mid = 0.5 * (lo + hi);
      (self_consistency(mid, t_K, tc, h_K) < 0.0 ? lo : hi) = mid;
    }
    m = 0.5 * (lo + hi);
    residual = std::fabs(self_consistency(m, t_K, tc, h_K));
  }

  if (residual > kResidualAccept) {
    std::ostringstream os;
    os << "solve_magnetization: did not converge at T=" << t_K << " K, B=" << b_ext_G
       << " G; last residual " << residual;
    throw NumericError(os.str());
  }
  return {std::clamp(m, 0.0, 1.0), residual};
}

Vec3 moment_vector(const ReducedMagnetization& m, const Vec3& b_dir, const MnpModel& model) {
  Vec3 dir = norm(b_dir) > 0.0 ? normalized(b_dir) : model.easy_axis;
  return model.m_sat_Am2 * m.m * dir;
}

Vec3 dipole_field_G(const Vec3& moment_Am2, const Vec3& r_m) {
  const double r = norm(r_m);
  if (!(r > 0)) throw InvalidArgument("dipole_field_G: zero displacement");
  const Vec3 rhat = normalized(r_m);
  // mu0/(4 pi) = 1e-7 T m/A; times 1e4 G/T.
  const double scale = 1e-3 / (r * r * r);
  return scale * (3.0 * dot(moment_Am2, rhat) * rhat - moment_Am2);
}

NvFieldSample field_at_nv(double t_K, const Vec3& b_ext_G, const MnpModel& model,
                          const Vec3& nv_axis) {
  const ReducedMagnetization m = solve_magnetization(t_K, norm(b_ext_G), model);
  const Vec3 mom = moment_vector(m, b_ext_G, model);
  const Vec3 b_total = b_ext_G + dipole_field_G(mom, model.position_m);
  return {b_total, dot(b_total, nv_axis)};
}

double f_minus_MHz(double t_K, const Vec3& b_ext_G, const MnpModel& model,
                   const nvspin::NvParams& nv) {
  const NvFieldSample field = field_at_nv(t_K, b_ext_G, model, nv.axis);
  const double d = nvspin::d_of_temperature(t_K, nv);
  return nvspin::transition_frequencies(d, field.b_total_G, nv).f_minus_MHz;
}

double susceptibility_dfdT(double t_K, const Vec3& b_ext_G, const MnpModel& model,
                           const nvspin::NvParams& nv) {
  const double h = kFdStepK / 2.0;
  const double up = f_minus_MHz(t_K + h, b_ext_G, model, nv);
  const double dn = f_minus_MHz(t_K - h, b_ext_G, model, nv);
  return (up - dn) / kFdStepK;
}

MnpModel calibrate_transducer(double target_dfdT_MHz_per_K, double t_peak_K,
                              const Vec3& b_ext_G, MnpModel model,
                              const nvspin::NvParams& nv) {
  if (!(target_dfdT_MHz_per_K > 0)) {
    throw InvalidArgument("calibrate_transducer: target must be > 0 MHz/K");
  }
  model.validate();
  if (model.m_sat_Am2 == 0.0) {
    throw NumericError("calibrate_transducer: m_sat is zero, no transducer to scale");
  }

  // Keep the saturated dipole field below half the level-crossing field so
  // both transitions stay labeled throughout the scan range.
  const Vec3 sat_dipole =
      dipole_field_G(model.m_sat_Am2 * normalized(b_ext_G), model.position_m);
  const double b_per_msat = norm(sat_dipole) / model.m_sat_Am2;
  const double m_sat_cap =
      0.5 * nv.d_zfs0_MHz / nv.gamma_e_MHz_per_G / b_per_msat;

  const double d_term = nv.dD_dT_MHz_per_K;
  double achieved = 0.0;
  for (int iter = 0; iter < 40; ++iter) {
    Peak peak = find_susceptibility_peak(model, b_ext_G, nv);
    achieved = std::fabs(peak.dfdT);
    if (std::fabs(peak.t_K - t_peak_K) <= 0.02 &&
        std::fabs(achieved / target_dfdT_MHz_per_K - 1.0) <= 0.002) {
      return model;
    }

    model.t_curie_K += t_peak_K - peak.t_K;
    peak = find_susceptibility_peak(model, b_ext_G, nv);

    // The magnetic part of df/dT is linear in m_sat; solve for the factor
    // that lands the signed peak value on the target.
    const double magnetic = peak.dfdT - d_term;
    if (!(magnetic > 0)) {
      throw NumericError("calibrate_transducer: susceptibility has no magnetic part to scale");
    }
    double factor = (target_dfdT_MHz_per_K - d_term) / magnetic;
    double next = std::clamp(model.m_sat_Am2 * factor, 1e-24, m_sat_cap);
    if (next == model.m_sat_Am2 && std::fabs(factor - 1.0) > 0.002) {
      std::ostringstream os;
      os << "calibrate_transducer: target " << target_dfdT_MHz_per_K
         << " MHz/K out of reach; achieved |df/dT| = " << std::fabs(peak.dfdT)
         << " MHz/K at the m_sat bound " << model.m_sat_Am2 << " A*m^2";
      throw NumericError(os.str());
    }
    model.m_sat_Am2 = next;
  }

  std::ostringstream os;
  os << "calibrate_transducer: no convergence after 40 rounds; achieved |df/dT| = "
     << achieved << " MHz/K vs target " << target_dfdT_MHz_per_K;
  throw NumericError(os.str());
}

}  // namespace nvtherm::magnet
