#include "nvtherm/nvspin.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <sstream>

#include "nvtherm/errors.hpp"

namespace nvtherm::nvspin {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kLabelGapMHz = 1e-6;

void require(bool ok, const char* field, const char* what) {
  if (!ok) {
    std::ostringstream os;
    os << "nv." << field << ": " << what;
    throw ConfigError(os.str());
  }
}

// Orthonormal frame with e3 = axis; the azimuthal choice is arbitrary and
// cancels in every observable.
void nv_frame(const Vec3& axis, Vec3& e1, Vec3& e2) {
  Vec3 helper = std::fabs(axis.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  e1 = normalized(helper - dot(helper, axis) * axis);
  e2 = cross(axis, e1);
}

}  // namespace

void NvParams::validate() const {
  require(d_zfs0_MHz > 0, "d_zfs0_MHz", "must be > 0");
  require(t0_K > 0, "t0_K", "must be > 0");
  require(gamma_e_MHz_per_G > 0, "gamma_e_MHz_per_G", "must be > 0");
  require(std::fabs(norm(axis) - 1.0) < 1e-12, "axis", "must be unit norm");
  require(t2_star_us > 0, "t2_star_us", "must be > 0");
  require(contrast > 0 && contrast < 1, "contrast", "must lie in (0,1)");
  require(nu > 0, "nu", "must be > 0");
  require(hyperfine_split_MHz >= 0, "hyperfine_split_MHz", "must be >= 0");
  require(linewidth_MHz > 0, "linewidth_MHz", "must be > 0");
}

double d_of_temperature(double t_K, const NvParams& nv) {
  return nv.d_zfs0_MHz + nv.dD_dT_MHz_per_K * (t_K - nv.t0_K);
}

Hamiltonian hamiltonian(double d_MHz, const Vec3& b_G, const NvParams& nv) {
  Vec3 e1, e2;
  nv_frame(nv.axis, e1, e2);
  const double bx = dot(b_G, e1);
  const double by = dot(b_G, e2);
  const double bz = dot(b_G, nv.axis);
  const double g = nv.gamma_e_MHz_per_G;

  // H = D Sz^2 + g (Bx Sx + By Sy + Bz Sz) in the {|+1>,|0>,|-1>} basis.
  const std::complex<double> off = g * std::complex<double>(bx, -by) / std::sqrt(2.0);
  Hamiltonian h{};
  h[0] = {d_MHz + g * bz, 0.0};
  h[1] = off;
  h[2] = {0.0, 0.0};
  h[3] = std::conj(off);
  h[4] = {0.0, 0.0};
  h[5] = off;
  h[6] = {0.0, 0.0};
  h[7] = std::conj(off);
  h[8] = {d_MHz - g * bz, 0.0};
  return h;
}

EigenSystem spin_eigensystem(const Hamiltonian& h) {
  Eigen::Matrix3cd m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = h[static_cast<size_t>(3 * r + c)];

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> solver(m);
  if (solver.info() != Eigen::Success) {
    throw NumericError("spin_eigensystem: eigensolver failed to converge");
  }

  EigenSystem out{};
  for (int k = 0; k < 3; ++k) {
    out.values[static_cast<size_t>(k)] = solver.eigenvalues()(k);
    for (int r = 0; r < 3; ++r) {
      out.vectors[static_cast<size_t>(k)][static_cast<size_t>(r)] = solver.eigenvectors()(r, k);
    }
  }
  return out;
}

TransitionPair transition_frequencies(double d_MHz, const Vec3& b_G, const NvParams& nv) {
  const EigenSystem es = spin_eigensystem(hamiltonian(d_MHz, b_G, nv));

  // The ms=0-like level is the eigenvector with the largest |<0|psi>|^2.
  int k0 = 0;
  double best = -1.0;
  for (int k = 0; k < 3; ++k) {
    double w = std::norm(es.vectors[static_cast<size_t>(k)][1]);
    if (w > best) {
      best = w;
      k0 = k;
    }
  }

  std::array<double, 2> others{};
  int n = 0;
  for (int k = 0; k < 3; ++k) {
    if (k != k0) others[static_cast<size_t>(n++)] = es.values[static_cast<size_t>(k)];
  }
  const double e0 = es.values[static_cast<size_t>(k0)];
  double lo = std::min(others[0], others[1]);
  double hi = std::max(others[0], others[1]);

  const double gap = std::min(std::fabs(lo - e0), std::fabs(hi - e0));
  if (gap <= kLabelGapMHz) {
    std::ostringstream os;
    os << "transition_frequencies: levels nearly degenerate with the ms=0 branch"
       << " (gap " << gap << " MHz <= " << kLabelGapMHz << " MHz), labeling ambiguous";
    throw NumericError(os.str());
  }

  TransitionPair tp{lo - e0, hi - e0};
  if (tp.f_minus_MHz <= 0.0) {
    std::ostringstream os;
    os << "transition_frequencies: level ordering leaves f_minus = " << tp.f_minus_MHz
       << " MHz <= 0; field is outside the supported regime";
    throw NumericError(os.str());
  }
  return tp;
}

std::vector<double> odmr_spectrum(std::span<const double> f_grid_MHz,
                                  std::span<const double> lines_MHz,
                                  const NvParams& nv) {
  const bool hf = nv.hyperfine_split_MHz > 0.0;
  const double half = nv.hyperfine_split_MHz / 2.0;
  const double depth = nv.contrast / (hf ? 2.0 : 1.0);
  const double hw = nv.linewidth_MHz / 2.0;  // half width at half maximum
  const double hw2 = hw * hw;

  std::vector<double> s(f_grid_MHz.size(), 1.0);
  for (size_t i = 0; i < f_grid_MHz.size(); ++i) {
    const double f = f_grid_MHz[i];
    double dip = 0.0;
    for (double line : lines_MHz) {
      if (hf) {
        for (double c : {line - half, line + half}) {
          const double df = f - c;
          dip += depth * hw2 / (df * df + hw2);
        }
      } else {
        const double df = f - line;
        dip += depth * hw2 / (df * df + hw2);
      }
    }
    s[i] -= dip;
  }
  return s;
}

double fid_signal(double t_us, double delta_f_MHz, const NvParams& nv) {
  if (t_us < 0.0) throw InvalidArgument("fid_signal: t_us must be >= 0");
  const double env = std::exp(-std::pow(t_us / nv.t2_star_us, nv.nu));
  const double half_c = nv.contrast / 2.0;
  return 1.0 - half_c + half_c * std::cos(kTwoPi * delta_f_MHz * t_us) * env;
}

double fid_responsivity(double t_us, double delta_f_MHz, const NvParams& nv) {
  if (t_us < 0.0) throw InvalidArgument("fid_responsivity: t_us must be >= 0");
  const double env = std::exp(-std::pow(t_us / nv.t2_star_us, nv.nu));
  const double half_c = nv.contrast / 2.0;
  return -half_c * kTwoPi * t_us * std::sin(kTwoPi * delta_f_MHz * t_us) * env;
}

}  // namespace nvtherm::nvspin
