#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "backaction/constants.hpp"

namespace backaction {

/// Measured and configured constants of the atoms-cavity system. SI units with
/// angular frequencies in rad/s; defaults are the published apparatus values.
struct PhysicalParams {
  double g0 = constants::two_pi * 14.4e6;           // single-atom coupling
  double kappa = constants::two_pi * 0.66e6;        // cavity field half-linewidth
  double gamma = constants::two_pi * 3.0e6;         // atomic half-linewidth
  double omega_z = constants::two_pi * 42.0e3;      // axial trap frequency
  double delta_ca = constants::two_pi * 100.0e9;    // omega_c - omega_a, signed
  double lambda_p = 780e-9;
  double lambda_t = 850e-9;
  double mass = constants::rb87_mass;
  double trap_depth_U = 6.6e-6 * constants::k_boltzmann;
  double temperature = 0.8e-6;
  double eta_det = 0.040;
  double sigma_jitter = constants::two_pi * 1.1e6;  // rms probe-detuning jitter
  double gamma_bg = 0.9;                            // background loss per atom, 1/s
  double mirror_loss_ppm = 3.8;
  double mirror_trans_ppm = 1.5;
  double cavity_length = 194e-6;
};

struct DerivedParams {
  double cooperativity_C;
  double kappa_from_mirrors;
  double k_p;
  double k_t;
  double f0;  // single-photon dipole force scale, sign follows delta_ca
};

/// Violated invariants, one human-readable line each; empty when valid.
std::vector<std::string> violations(const PhysicalParams& params);
/// Throws ValidationError listing every violated invariant.
void validate(const PhysicalParams& params);

DerivedParams derive(const PhysicalParams& params);

inline double cooperativity(const PhysicalParams& p) { return p.g0 * p.g0 / (2.0 * p.kappa * p.gamma); }
inline double probe_wavevector(const PhysicalParams& p) { return constants::two_pi / p.lambda_p; }
inline double single_photon_force(const PhysicalParams& p) {
  return constants::hbar * probe_wavevector(p) * p.g0 * p.g0 / p.delta_ca;
}

/// Flat `key = value` document with `#` comments. Keys are looked up (and marked
/// as consumed) by the typed loaders so that leftover keys can be reported.
class ConfigDocument {
 public:
  static ConfigDocument parse(std::string_view text);

  bool contains(std::string_view key) const;
  std::optional<double> number(std::string_view key);
  std::optional<std::uint64_t> unsigned_integer(std::string_view key);
  std::optional<std::string> text(std::string_view key);

  /// Keys present in the document that no loader asked for.
  std::vector<std::string> unconsumed() const;
  /// Throws ConfigError naming the first unconsumed key.
  void require_all_consumed() const;

  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string, std::less<>> entries_;
  std::set<std::string, std::less<>> consumed_;
};

/// Reads the physical-parameter keys out of `doc`; missing keys keep defaults.
/// No validation is performed.
PhysicalParams params_from(ConfigDocument& doc);

/// Parses a configuration document holding only physical-parameter keys, then
/// validates. Unknown keys raise ConfigError.
PhysicalParams load_config(std::string_view text);

/// One exported parameter: value in the config-file unit.
struct ParamEntry {
  std::string key;
  double value;
  std::string unit;
};

/// All parameters in configuration units (Hz, m, uK, ...) followed by the
/// derived quantities.
std::vector<ParamEntry> export_params(const PhysicalParams& params);
/// CSV dump with header `key,value,unit` and 17-significant-digit values.
std::string params_to_csv(const PhysicalParams& params);

}  // namespace backaction
