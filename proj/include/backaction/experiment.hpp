#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "backaction/collective.hpp"
#include "backaction/params.hpp"
#include "backaction/spectra.hpp"

// Forward model of the bolometric loss measurement and its inverse analysis.
namespace backaction::experiment {

/// Probe locked to a fixed detuning from the atoms-shifted resonance with a
/// fixed photon number, instead of a fixed frequency.
struct HoldSetting {
  double Delta = 0.0;  // rad/s
  double nbar = 0.0;
};

struct ProtocolConfig {
  double n_initial = 1.0e5;
  double delta_pc = constants::two_pi * 40.0e6;  // probe detuning from the bare cavity
  double nbar_max = 1.9;                         // jitter-averaged photon number on resonance
  double bin_time = 1.0e-4;                      // s
  double window = 12.0e-3;                       // s
  double equilibration_tau = 3.0e-3;             // s
  double duration = 1.3;                         // s
  std::uint64_t seed = 20240611;
  double extra_loss = 0.0;                       // 1/s, phenomenological
  std::uint32_t repetitions = 30;                // identical runs whose counts are summed per bin
  std::optional<HoldSetting> hold;
};

std::vector<std::string> violations(const ProtocolConfig& config);
void validate(const ProtocolConfig& config);

/// Reads protocol keys (`n_initial`, `delta_pc_hz`, `nbar_max`, `bin_time_s`,
/// `window_s`, `equilibration_tau_s`, `duration_s`, `seed`, `extra_loss`,
/// `repetitions`, `hold_delta_hz`, `hold_nbar`); missing keys keep defaults.
ProtocolConfig protocol_from(ConfigDocument& doc);
/// The same keys as `key=value` pairs, for trace headers.
std::vector<std::pair<std::string, std::string>> protocol_metadata(const ProtocolConfig& config);

/// Resonant drive strength whose jitter average on resonance is `nbar_max`.
double drive_for(double nbar_max, const PhysicalParams& params);

/// Jitter-averaged photon number and heating on a grid of atom numbers at a
/// fixed probe detuning, for an ensemble of fixed shape.
class LineshapeTable {
 public:
  LineshapeTable(const CollectiveMode& shape, double delta_pc, double drive, const PhysicalParams& params,
                 double max_atoms, int points = 4001);

  double nbar(double n_atoms) const;
  double nbar_slope(double n_atoms) const;
  /// Per-atom heating power R_fs + R_c averaged over the jitter, W.
  double heating(double n_atoms) const;
  /// Atom number of the transmission maximum.
  double peak_atoms() const { return peak_atoms_; }
  double max_atoms() const { return atoms_[atoms_.size() - 1]; }
  /// Atom number on the side above (upper = true) or below the peak whose
  /// photon number is `nbar`; clamps to the peak or the table edge.
  double invert(double nbar, bool upper) const;

 private:
  double interpolate(const Eigen::VectorXd& values, double n_atoms) const;

  Eigen::VectorXd atoms_;
  Eigen::VectorXd nbar_;
  Eigen::VectorXd heating_;
  Eigen::Index peak_ = 0;
  double peak_atoms_ = 0.0;
};

struct TransmissionTrace {
  ProtocolConfig config;
  Eigen::VectorXd times;  // bin centres, s
  std::vector<std::int64_t> counts;
  Eigen::VectorXd true_nbar;
  Eigen::VectorXd true_N;
  // Ground truth not written to trace files.
  Eigen::VectorXd heating;         // lagged per-atom heating R_eq, W
  Eigen::VectorXd loss_rate;       // per-atom loss rate, 1/s
  Eigen::VectorXd injected_ratio;  // instantaneous jitter-averaged (R_fs + R_c) / R_fs per photon
  double heating_loss = 0.0;       // atoms lost to heating, integral of N R_eq / U
  double deposited = 0.0;          // integral of N R / U (unlagged heating), atoms
};

/// Integrates the atom number and lagged heating with RK4 and draws Poisson
/// counts per bin. eta_det = 0 is allowed here (no counts).
TransmissionTrace forward_simulate(const ProtocolConfig& config, const PhysicalParams& params,
                                   const AtomicEnsemble& ensemble);

std::string trace_to_csv(const TransmissionTrace& trace,
                         std::span<const std::pair<std::string, std::string>> header = {});
/// Restores counts, truth columns and the protocol from its `# key=value` header.
TransmissionTrace trace_from_csv(std::string_view text);

enum class WindowStatus { ok, below_detection, ambiguous, not_converged };

struct HeatingRecord {
  double t = 0.0;         // window centre, s
  double delta_N = 0.0;   // inferred atom shift, rad/s
  double delta = 0.0;     // delta_pc - delta_N, rad/s
  double N = 0.0;
  double N_err = 0.0;
  double dNdt = 0.0;      // 1/s
  double nbar = 0.0;      // fitted mean photon number over the window
  double R = 0.0;         // per-atom heating, W
  double ratio = 0.0;     // R / R_fs(nbar)
  double ratio_err = 0.0;
  WindowStatus status = WindowStatus::ok;
};

struct HeatingAnalysis {
  std::vector<HeatingRecord> records;
};

/// Per window (stride window / 4): Poisson maximum-likelihood fit of
/// N(t) = N_c exp(-Gamma (t - t_c)) through the jitter-averaged lineshape,
/// starting on the branch given by the window's position relative to the
/// transmission peak. R = U (Gamma - gamma_bg).
HeatingAnalysis analyze_trace(const TransmissionTrace& trace, const PhysicalParams& params,
                              const AtomicEnsemble& ensemble);

struct PeakEstimate {
  double ratio = 0.0;
  double std_error = 0.0;  // ignores the overlap between windows
  double t = 0.0;          // centre of the averaged windows, s
};

/// Largest inverse-variance mean of R/R_fs over `span` consecutive ok
/// windows whose relative error is at most `max_relative_error`; nan when no
/// such run exists.
PeakEstimate recovered_peak(const HeatingAnalysis& analysis, std::size_t span = 5, double max_relative_error = 0.1);

/// Rows `t_s,delta_rad_s,N,dNdt,R_W,ratio,ratio_err`; undetected windows as nan.
std::string analysis_to_csv(const HeatingAnalysis& analysis,
                            std::span<const std::pair<std::string, std::string>> header = {});

struct HeatingCurvePoint {
  double delta;  // delta_pc - delta_N, rad/s
  double nbar;   // jitter-averaged photon number
  double r_c;    // W per atom
  double r_fs;   // W per atom
  double ratio;  // (R_fs + R_c) / R_fs per photon
};

/// Theory curve with detuning jitter `sigma`: n(delta) [1 + R_c/R_fs] averaged
/// over the jitter and normalised per averaged photon.
std::vector<HeatingCurvePoint> heating_curve(const PhysicalParams& params, const CollectiveMode& mode, double sigma,
                                             std::span<const double> delta_grid, double nbar_max);

struct OffResonanceSetup {
  double n_atoms = 9000.0;
  double nbar = 2.0;
  double Delta = constants::two_pi * 40.0e6;
  double duration = 0.2;  // s
  double extra_loss = 0.0;
  double bin_time = 1.0e-4;
  std::uint64_t seed = 20240611;
};

struct OffResonanceResult {
  double ratio = 0.0;   // from the fitted decay, nan when insufficient_data
  double theory = 0.0;  // 1 + R_c/R_fs at the held detuning
  bool insufficient_data = false;
};

/// Control-measurement parameters: the default apparatus with delta_ca = 2 pi x 29.6 GHz.
PhysicalParams control_params(PhysicalParams base = {});

OffResonanceResult offresonance_control(const PhysicalParams& params, const OffResonanceSetup& setup);

/// extra_loss for which the control measurement reads `target_ratio`.
double extra_loss_for_ratio(double target_ratio, const PhysicalParams& params, const OffResonanceSetup& setup);

struct TechnicalNoiseFit {
  double linear = 0.0;       // A, W per photon
  double quadratic = 0.0;    // B, W per photon^2
  double linear_err = 0.0;
  double quadratic_err = 0.0;
  double nbar_ref = 0.0;
  double fraction = 0.0;     // B nbar / (A + B nbar) at nbar_ref
  double fraction_err = 0.0;
  double linear_true = 0.0;
  double quadratic_true = 0.0;
};

/// Synthetic heating measurements R(nbar) = R_fs + R_c (1 + rin nbar) with a
/// seeded relative error, fitted by weighted least squares to A nbar + B nbar^2.
TechnicalNoiseFit technical_noise_scan(const PhysicalParams& params, const CollectiveMode& mode,
                                       std::span<const double> nbar_list, double technical_rin, double Delta,
                                       std::uint64_t seed, double relative_noise = 0.03, double nbar_ref = 1.9);

/// technical_rin giving a technical share `fraction` of the heating at nbar_ref.
double rin_for_fraction(double fraction, double nbar_ref, double Delta, const CollectiveMode& mode,
                        const PhysicalParams& params);

}  // namespace backaction::experiment
