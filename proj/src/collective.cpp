#include "backaction/collective.hpp"

#include <cmath>
#include <limits>

#include "backaction/csv.hpp"
#include "backaction/errors.hpp"

namespace backaction {

AtomicEnsemble AtomicEnsemble::uniform(double n_atoms) {
  if (!(n_atoms >= 0.0) || !std::isfinite(n_atoms)) throw DomainError("uniform ensemble: n_atoms must be >= 0");
  AtomicEnsemble e;
  e.n_atoms_ = n_atoms;
  e.uniform_ = true;
  return e;
}

AtomicEnsemble AtomicEnsemble::at_positions(Eigen::VectorXd positions) {
  AtomicEnsemble e;
  e.n_atoms_ = static_cast<double>(positions.size());
  e.uniform_ = false;
  e.positions_ = std::move(positions);
  return e;
}

AtomicEnsemble AtomicEnsemble::lattice(std::int64_t n_atoms, int n_sites, double offset, const PhysicalParams& params) {
  if (n_atoms < 0) throw DomainError("lattice ensemble: n_atoms must be >= 0");
  if (n_sites < 1) throw DomainError("lattice ensemble: n_sites must be >= 1");
  const double spacing = 0.5 * params.lambda_t;
  const double centre = 0.5 * static_cast<double>(n_sites - 1);
  const std::int64_t per_site = n_atoms / n_sites;
  const std::int64_t remainder = n_atoms % n_sites;
  Eigen::VectorXd z(n_atoms);
  Eigen::Index k = 0;
  for (int j = 0; j < n_sites; ++j) {
    const double site = offset + (static_cast<double>(j) - centre) * spacing;
    const std::int64_t count = per_site + (j < remainder ? 1 : 0);
    for (std::int64_t i = 0; i < count; ++i) z[k++] = site;
  }
  return at_positions(std::move(z));
}

std::string AtomicEnsemble::to_csv() const {
  std::string out;
  if (uniform_) {
    out += "# distribution=uniform\n# n_atoms=" + csv::format_double(n_atoms_) + "\n";
  } else {
    out += "# distribution=explicit\n";
  }
  csv::Table table({"index", "z_m"});
  for (Eigen::Index i = 0; i < positions_.size(); ++i) table.add_row({static_cast<double>(i), positions_[i]});
  return out + table.to_string();
}

AtomicEnsemble AtomicEnsemble::from_csv(std::string_view text) {
  const auto parsed = csv::parse(text);
  for (const auto& [k, v] : parsed.metadata) {
    if (k == "distribution" && v == "uniform") {
      for (const auto& [k2, v2] : parsed.metadata) {
        if (k2 == "n_atoms") return uniform(std::stod(v2));
      }
      throw ConfigError("n_atoms", "uniform ensemble csv lacks '# n_atoms=' line");
    }
  }
  const auto index_col = parsed.column_index("index");
  const auto z_col = parsed.column_index("z_m");
  Eigen::VectorXd z(static_cast<Eigen::Index>(parsed.rows.size()));
  std::vector<bool> seen(parsed.rows.size(), false);
  for (const auto& row : parsed.rows) {
    const double idx = row[index_col];
    if (idx < 0 || idx >= static_cast<double>(parsed.rows.size()) || idx != std::floor(idx) ||
        seen[static_cast<std::size_t>(idx)]) {
      throw ConfigError("index", "ensemble csv: bad or repeated index " + csv::format_double(idx));
    }
    seen[static_cast<std::size_t>(idx)] = true;
    z[static_cast<Eigen::Index>(idx)] = row[z_col];
  }
  return at_positions(std::move(z));
}

void validate(const AtomicEnsemble& ensemble, const PhysicalParams& params) {
  std::vector<std::string> out;
  if (!(ensemble.n_atoms() >= 0.0)) out.push_back("n_atoms must be >= 0");
  if (!ensemble.is_uniform()) {
    if (static_cast<double>(ensemble.positions().size()) != ensemble.n_atoms()) {
      out.push_back("explicit position count must equal n_atoms");
    }
    const double half = 0.5 * params.cavity_length;
    for (Eigen::Index i = 0; i < ensemble.positions().size(); ++i) {
      if (!(std::abs(ensemble.positions()[i]) < half)) {
        out.push_back("position " + std::to_string(i) + " lies outside the cavity (|z| >= L/2)");
        break;
      }
    }
  }
  if (!out.empty()) throw ValidationError(std::move(out));
}

double effective_atom_number(const AtomicEnsemble& ensemble, const PhysicalParams& params) {
  if (ensemble.is_uniform()) return 0.5 * ensemble.n_atoms();
  const double kp = probe_wavevector(params);
  return (2.0 * kp * ensemble.positions().array()).sin().square().sum();
}

double cavity_shift(const AtomicEnsemble& ensemble, const PhysicalParams& params) {
  const double g0_sq = params.g0 * params.g0;
  if (ensemble.is_uniform()) return ensemble.n_atoms() * g0_sq / (2.0 * params.delta_ca);
  const double kp = probe_wavevector(params);
  return g0_sq * (kp * ensemble.positions().array()).sin().square().sum() / params.delta_ca;
}

double atoms_from_shift(double delta_N, const PhysicalParams& params) {
  if (delta_N != 0.0 && (delta_N > 0.0) != (params.delta_ca > 0.0)) {
    throw DomainError("atoms_from_shift: delta_N and delta_ca must share a sign");
  }
  return 2.0 * params.delta_ca * delta_N / (params.g0 * params.g0);
}

double static_displacement(double nbar, const PhysicalParams& params) {
  // The displacement formula's bare wavevector "k" is read as the probe k_p.
  return single_photon_force(params) * nbar / (params.mass * params.omega_z * params.omega_z);
}

CollectiveMode collective_mode(double n_eff, double delta_N, double n_atoms, const PhysicalParams& params,
                               double nbar) {
  CollectiveMode m;
  m.n_atoms = n_atoms;
  m.n_eff = n_eff;
  m.delta_N = delta_N;
  m.nbar = nbar;
  m.force_sign = params.delta_ca >= 0.0 ? 1 : -1;
  const double f0 = single_photon_force(params);
  m.decoupled = !(n_eff > 0.0);
  if (m.decoupled) {
    m.z_ho = std::numeric_limits<double>::infinity();
    m.p_ho = 0.0;
    m.epsilon = 0.0;
    m.shift_per_photon = 0.0;
  } else {
    m.z_ho = std::sqrt(constants::hbar / (2.0 * params.mass * params.omega_z * n_eff));
    m.p_ho = constants::hbar / (2.0 * m.z_ho);
    m.epsilon = n_eff * std::abs(f0) * m.z_ho / (constants::hbar * params.kappa);
    m.shift_per_photon = n_eff * f0 * f0 / (constants::hbar * params.mass * params.omega_z * params.omega_z);
  }
  m.omega_c_prime = delta_N - m.shift_per_photon * nbar;
  return m;
}

CollectiveMode collective_mode(const AtomicEnsemble& ensemble, const PhysicalParams& params, double nbar) {
  return collective_mode(effective_atom_number(ensemble, params), cavity_shift(ensemble, params), ensemble.n_atoms(),
                         params, nbar);
}

double granularity(const AtomicEnsemble& ensemble, const PhysicalParams& params) {
  return collective_mode(ensemble, params).epsilon;
}

double shifted_resonance(const AtomicEnsemble& ensemble, double nbar, const PhysicalParams& params) {
  return collective_mode(ensemble, params, nbar).omega_c_prime;
}

CollectiveMode rescale(const CollectiveMode& mode, double n_atoms, const PhysicalParams& params) {
  if (!(mode.n_atoms > 0.0)) throw DomainError("rescale: source mode has no atoms");
  if (!(n_atoms >= 0.0)) throw DomainError("rescale: n_atoms must be >= 0");
  const double s = n_atoms / mode.n_atoms;
  return collective_mode(mode.n_eff * s, mode.delta_N * s, n_atoms, params, mode.nbar);
}

CollectiveMode at_photon_number(CollectiveMode mode, double nbar) {
  mode.nbar = nbar;
  mode.omega_c_prime = mode.delta_N - mode.shift_per_photon * nbar;
  return mode;
}

}  // namespace backaction
