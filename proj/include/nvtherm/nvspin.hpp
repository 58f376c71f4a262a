#pragma once

#include <array>
#include <complex>
#include <span>
#include <vector>

#include "nvtherm/vec3.hpp"

namespace nvtherm::nvspin {

// Spin-1 ground-state parameters plus the line-shape/coherence numbers used
// by the measurement model. Frequencies in MHz, fields in Gauss, times in us.
struct NvParams {
  double d_zfs0_MHz = 2870.0;        // zero-field splitting at t0_K
  double t0_K = 298.0;               // reference temperature for d_zfs0
  double dD_dT_MHz_per_K = -0.074;   // intrinsic thermal shift of the splitting
  double gamma_e_MHz_per_G = 2.8;    // electron gyromagnetic ratio
  Vec3 axis{0.0, 0.0, 1.0};          // quantization axis, unit norm
  double t2_star_us = 1.5;
  double contrast = 0.27;            // bright/dark photon contrast, in (0,1)
  double nu = 3.3;                   // stretched-exponential decay exponent
  double hyperfine_split_MHz = 0.0;  // 0 disables the doublet substructure
  double linewidth_MHz = 0.6;        // Lorentzian FWHM of a resonance dip

  void validate() const;  // throws ConfigError naming the offending field
};

struct TransitionPair {
  double f_minus_MHz = 0.0;
  double f_plus_MHz = 0.0;
};

// Linear thermal model of the zero-field splitting.
double d_of_temperature(double t_K, const NvParams& nv);

// 3x3 Hermitian matrix in the {|+1>, |0>, |-1>} basis, row-major, MHz units.
// The lab-frame field is rotated into the NV frame defined by nv.axis.
using Hamiltonian = std::array<std::complex<double>, 9>;
Hamiltonian hamiltonian(double d_MHz, const Vec3& b_G, const NvParams& nv);

struct EigenSystem {
  std::array<double, 3> values;                          // ascending
  std::array<std::array<std::complex<double>, 3>, 3> vectors;  // column k pairs with values[k]
};
EigenSystem spin_eigensystem(const Hamiltonian& h);

// Both spin transitions out of the ms=0-like level, identified by eigenvector
// overlap so the labels track the axial-limit branches D -/+ gamma*B_par.
// Throws NumericError when levels are too close to label (gap <= 1e-6 MHz).
TransitionPair transition_frequencies(double d_MHz, const Vec3& b_G, const NvParams& nv);

// Normalized CW dip spectrum: S(f) = 1 - sum_k (C/n_hf) * L(f; line_k, fwhm),
// where each line gains a symmetric doublet when hyperfine splitting is set.
std::vector<double> odmr_spectrum(std::span<const double> f_grid_MHz,
                                  std::span<const double> lines_MHz,
                                  const NvParams& nv);

// Free-induction-decay fringe, normalized to the ms=0 photon level:
//   s(t) = 1 - C/2 + (C/2) cos(2 pi df t) exp(-(t/T2*)^nu),  t >= 0.
double fid_signal(double t_us, double delta_f_MHz, const NvParams& nv);

// Analytic ds/d(delta_f) of the fringe, in 1/MHz.
double fid_responsivity(double t_us, double delta_f_MHz, const NvParams& nv);

}  // namespace nvtherm::nvspin
