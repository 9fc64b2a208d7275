#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <string_view>

#include "backaction/params.hpp"

namespace backaction {

/// N atoms at equilibrium positions along the cavity axis. Either an explicit
/// list of positions (one per atom, metres, cavity centre at 0) or the
/// continuum `uniform` distribution over the probe standing wave.
class AtomicEnsemble {
 public:
  static AtomicEnsemble uniform(double n_atoms);
  static AtomicEnsemble at_positions(Eigen::VectorXd positions);
  /// Equal atom counts on `n_sites` consecutive trap antinodes (spacing
  /// lambda_t / 2) centred on the cavity middle and shifted by `offset` relative
  /// to the probe standing wave. Remainder atoms go to the first sites.
  static AtomicEnsemble lattice(std::int64_t n_atoms, int n_sites, double offset, const PhysicalParams& params);

  double n_atoms() const { return n_atoms_; }
  bool is_uniform() const { return uniform_; }
  const Eigen::VectorXd& positions() const { return positions_; }

  /// CSV `index,z_m`; uniform ensembles have no positions to serialise.
  std::string to_csv() const;
  static AtomicEnsemble from_csv(std::string_view text);

 private:
  double n_atoms_ = 0.0;
  bool uniform_ = true;
  Eigen::VectorXd positions_;
};

void validate(const AtomicEnsemble& ensemble, const PhysicalParams& params);

/// Derived quantities of the single collective mode coupled to the cavity.
struct CollectiveMode {
  double n_atoms = 0.0;
  double n_eff = 0.0;            // sum sin^2(2 k_p z_i)
  double delta_N = 0.0;          // rad/s, sum g^2(z_i) / delta_ca
  double z_ho = 0.0;             // m
  double p_ho = 0.0;             // kg m/s
  double epsilon = 0.0;          // granularity, >= 0
  double shift_per_photon = 0.0; // rad/s, N_eff f0^2 / (hbar m omega_z^2) >= 0
  double nbar = 0.0;             // photon number the shift below refers to
  double omega_c_prime = 0.0;    // omega_c' - omega_c at `nbar`
  bool decoupled = true;         // n_eff == 0
  int force_sign = 1;            // sign of f0, i.e. of delta_ca
};

double effective_atom_number(const AtomicEnsemble& ensemble, const PhysicalParams& params);
double cavity_shift(const AtomicEnsemble& ensemble, const PhysicalParams& params);
/// Inverse of cavity_shift for the uniform distribution: N = 2 delta_ca delta_N / g0^2.
double atoms_from_shift(double delta_N, const PhysicalParams& params);
double granularity(const AtomicEnsemble& ensemble, const PhysicalParams& params);
/// Static collective displacement from n-bar photons, signed like delta_ca.
double static_displacement(double nbar, const PhysicalParams& params);
/// omega_c' - omega_c including the photon-number dependent displacement shift.
double shifted_resonance(const AtomicEnsemble& ensemble, double nbar, const PhysicalParams& params);

CollectiveMode collective_mode(const AtomicEnsemble& ensemble, const PhysicalParams& params, double nbar = 0.0);
CollectiveMode collective_mode(double n_eff, double delta_N, double n_atoms, const PhysicalParams& params,
                               double nbar = 0.0);

/// The same ensemble shape with every extensive quantity scaled to `n_atoms`.
CollectiveMode rescale(const CollectiveMode& mode, double n_atoms, const PhysicalParams& params);

/// Mode with the displacement shift evaluated at a different photon number.
CollectiveMode at_photon_number(CollectiveMode mode, double nbar);

}  // namespace backaction
