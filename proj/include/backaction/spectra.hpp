#pragma once

#include <Eigen/Core>

#include <complex>
#include <vector>

#include "backaction/collective.hpp"
#include "backaction/params.hpp"

namespace backaction {

// ---------------------------------------------------------------------------
// Closed-form cavity response and photon-number noise. Templated on the scalar
// so the same expressions serve double grids and extended-precision checks.
// ---------------------------------------------------------------------------

/// L(omega) = (1 - i (omega - omega_c') / kappa)^-1; |L|^2 is the normalised
/// Lorentzian transmission.
template <typename Scalar>
std::complex<Scalar> lorentzian_response(Scalar omega, Scalar omega_c_prime, Scalar kappa) {
  return Scalar(1) / std::complex<Scalar>(Scalar(1), -(omega - omega_c_prime) / kappa);
}

/// Spectral density of intracavity photon-number fluctuations (per unit angular
/// frequency, units of s): 2 nbar kappa / (kappa^2 + (Delta + omega)^2).
/// Delta is the probe detuning from the atoms-shifted resonance. Not symmetric
/// in omega unless Delta = 0.
template <typename Scalar>
Scalar photon_noise_spectrum(Scalar omega, Scalar nbar, Scalar Delta, Scalar kappa) {
  const Scalar d = Delta + omega;
  return Scalar(2) * nbar * kappa / (kappa * kappa + d * d);
}

template <typename Derived>
auto photon_noise_spectrum(const Eigen::ArrayBase<Derived>& omega, typename Derived::Scalar nbar,
                           typename Derived::Scalar Delta, typename Derived::Scalar kappa) {
  using Scalar = typename Derived::Scalar;
  return ((omega + Delta).square() + kappa * kappa).inverse() * (Scalar(2) * nbar * kappa);
}

/// [S(omega) + S(-omega)] / 2, the only part of the spectrum a classical
/// stochastic force can realise.
template <typename Scalar>
Scalar symmetrized_noise_spectrum(Scalar omega, Scalar nbar, Scalar Delta, Scalar kappa) {
  return Scalar(0.5) * (photon_noise_spectrum(omega, nbar, Delta, kappa) +
                        photon_noise_spectrum(-omega, nbar, Delta, kappa));
}

/// <n(tau) n(0)> - nbar^2 = nbar exp(i Delta tau - kappa tau) for tau >= 0,
/// continued to tau < 0 by C(-tau) = conj(C(tau)). Its transform
/// \int e^{i omega tau} C(tau) dtau is photon_noise_spectrum.
template <typename Scalar>
std::complex<Scalar> two_time_correlation(Scalar tau, Scalar nbar, Scalar Delta, Scalar kappa) {
  const Scalar t = tau < Scalar(0) ? -tau : tau;
  const std::complex<Scalar> c = nbar * std::exp(std::complex<Scalar>(-kappa * t, Delta * t));
  return tau < Scalar(0) ? std::conj(c) : c;
}

enum class SpectrumProvenance { analytic, oracle };

struct NoiseSpectrum {
  Eigen::ArrayXd grid;    // angular frequency, rad/s, strictly increasing
  Eigen::ArrayXd values;  // s
  Eigen::ArrayXd std_error;  // zero for analytic spectra
  SpectrumProvenance provenance = SpectrumProvenance::analytic;
};

void validate(const NoiseSpectrum& spectrum);

NoiseSpectrum analytic_spectrum(const Eigen::ArrayXd& grid, double nbar, double Delta, double kappa);

// ---------------------------------------------------------------------------
// Heating rates and occupation dynamics.
// ---------------------------------------------------------------------------

struct HeatingRates {
  double r_c;    // W per atom
  double r_fs;   // W per atom
  double ratio;  // R / R_fs = 1 + R_c / R_fs
};

/// Free-space diffusive heating in a standing wave, (f0^2 / 2m)(nbar / kappa)(1 / C).
double freespace_heating(double nbar, const PhysicalParams& params);

/// Backaction heating per atom, hbar omega_z kappa^2 eps^2 S_nn(-omega_z) / N.
double backaction_heating(double nbar, double Delta, const CollectiveMode& mode, const PhysicalParams& params);

/// R_c / R_fs. Both rates are linear in nbar, so this depends on detuning only;
/// for uniform ensembles it equals C / (1 + (Delta - omega_z)^2 / kappa^2).
double backaction_ratio(double Delta, const CollectiveMode& mode, const PhysicalParams& params);

HeatingRates heating_rates(double nbar, double Delta, const CollectiveMode& mode, const PhysicalParams& params);

struct OccupationRate {
  double rate;                   // d<a^dag a>/dt, 1/s
  bool beyond_small_occupation;  // occupation above the warning threshold
};

/// kappa^2 eps^2 [S(-omega_z) + (S(-omega_z) - S(+omega_z)) <a^dag a>].
OccupationRate occupation_rate(double occupation, double nbar, double Delta, const CollectiveMode& mode,
                               const PhysicalParams& params, double warn_threshold = 10.0);

// ---------------------------------------------------------------------------
// Self-consistent intracavity photon number and the jitter-averaged lineshape.
// delta_pc is the probe detuning from the bare cavity; the atoms shift the
// resonance by mode.delta_N - mode.shift_per_photon * nbar.
// ---------------------------------------------------------------------------

enum class SweepBranch { sweep_up, sweep_down };

struct SteadyState {
  double nbar;      // selected solution
  double Delta;     // probe detuning from omega_c'(nbar)
  int n_solutions;  // 1 or 3 (2 exactly at a fold)

  bool multivalued() const { return n_solutions > 1; }
};

/// Solves nbar = nbar_max |L(omega_p; omega_c'(nbar))|^2. When several solutions
/// exist, sweep_up (detuning increasing) takes the lowest and sweep_down the
/// highest, i.e. the one reached by continuation from the stated side.
SteadyState steady_intracavity(double delta_pc, double nbar_max, const CollectiveMode& mode,
                               const PhysicalParams& params, SweepBranch branch);

/// Probe detunings delta_pc at which the number of steady states changes; empty
/// when the lineshape is single valued. Sorted ascending.
std::vector<double> bistable_folds(double nbar_max, const CollectiveMode& mode, const PhysicalParams& params);

struct JitterAverage {
  double nbar;             // <nbar>_G
  double nbar_times_ratio; // <nbar (1 + R_c/R_fs)>_G
  double error;            // quadrature error estimate
};

/// Gaussian average (rms params.sigma_jitter) over probe-detuning jitter of the
/// self-consistent photon number and of the photon-weighted heating ratio.
JitterAverage jitter_average(double delta_pc, double nbar_max, const CollectiveMode& mode,
                             const PhysicalParams& params, SweepBranch branch = SweepBranch::sweep_up);

/// Jitter-convolved (Voigt) intracavity photon number.
double voigt_transmission(double delta_pc, double nbar_max, const CollectiveMode& mode, const PhysicalParams& params,
                          SweepBranch branch = SweepBranch::sweep_up);

/// Per-photon heating ratio <nbar R/R_fs>_G / <nbar>_G divided by the unjittered
/// on-peak value 1 + max R_c/R_fs.
double convolved_heating_per_photon(double delta_pc, double nbar_max, const CollectiveMode& mode,
                                    const PhysicalParams& params);

/// <1 / (1 + x^2 / kappa^2)>_G: fraction of the resonant photon number that
/// survives the detuning jitter at zero detuning, without displacement shift.
double voigt_peak_fraction(const PhysicalParams& params);

}  // namespace backaction
