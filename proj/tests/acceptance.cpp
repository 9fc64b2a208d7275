// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "backaction/collective.hpp"
#include "backaction/experiment.hpp"
#include "backaction/oracle.hpp"
#include "backaction/params.hpp"
#include "backaction/spectra.hpp"

using namespace backaction;

namespace {

// Tolerances and runtime limits.
constexpr double kCooperativityTarget = 52.0;
constexpr double kCooperativityTol = 1.0;
constexpr double kKappaMirrorTol = 0.05;
constexpr double kTwoOverKappaQuoted = 4.8e-7;  // s, quoted to two digits
constexpr double kTwoOverKappaQuotedTol = 0.01;
constexpr double kSpectrumTol = 1e-3;
constexpr double kPeriodogramRms = 0.05;
constexpr std::size_t kTrajectories = 1000;
constexpr double kKickedTol = 0.10;
constexpr double kKickedSigmas = 3.0;
constexpr double kFactorTarget = 0.7;
constexpr double kFactorTol = 0.05;
constexpr double kCurveLow = 33.0;
constexpr double kCurveHigh = 53.0;
constexpr double kWhitenessTol = 1e-9;
constexpr double kPeakTol = 0.15;
constexpr double kLossTarget = 3.0;
constexpr double kLossFactor = 1.5;
constexpr int kMaxSwitchOffset = 1;
constexpr double kSplitTol = 0.10;

struct Outcome {
  bool pass;
  std::string detail;
};

unsigned threads() { return std::max(1u, std::thread::hardware_concurrency()); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const PhysicalParams P{};
const double K = P.kappa;

CollectiveMode crossing_mode(const PhysicalParams& p = P) {
  return collective_mode(AtomicEnsemble::uniform(atoms_from_shift(experiment::ProtocolConfig{}.delta_pc, p)), p);
}

Outcome cooperativity_check() {
  const double C = derive(P).cooperativity_C;
  return {std::abs(C - kCooperativityTarget) <= kCooperativityTol, fmt("C = %.4f", C)};
}

Outcome mirror_kappa() {
  const double k = derive(P).kappa_from_mirrors;
  const double target = constants::two_pi * 0.66e6;
  const double rel = std::abs(k / target - 1.0);
  return {rel <= kKappaMirrorTol, fmt("kappa_mirrors = 2pi x %.4f MHz, rel %.4f", k / constants::two_pi / 1e6, rel)};
}

Outcome spectrum_peak() {
  const double s = photon_noise_spectrum(-P.omega_z, 1.0, P.omega_z, K);
  const double rel = std::abs(s / (2.0 / K) - 1.0);
  const double rel_quoted = std::abs(s / kTwoOverKappaQuoted - 1.0);
  const Eigen::ArrayXd grid = Eigen::ArrayXd::LinSpaced(401, -10.0 * K, 10.0 * K);
  const double ft = oracle::spectrum_ft_check(1.0, P.omega_z, K, grid).max_relative_error;
  return {rel <= kSpectrumTol && rel_quoted <= kTwoOverKappaQuotedTol && ft <= kSpectrumTol,
          fmt("S/nbar = %.6e s, rel vs 2/kappa %.1e, FT max rel %.1e", s, rel, ft)};
}

Outcome periodogram() {
  const oracle::TrajectoryConfig tc{20240611, kTrajectories, 0.05 / K, 2048 * 0.05 / K};
  const auto est = oracle::noise_periodogram(tc, 1.0, P.omega_z, K, oracle::NoiseProcess::real_fluctuation, 5.0 * K,
                                             4, threads());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < est.grid.size(); ++i) {
    sum += std::pow(est.values[i] / symmetrized_noise_spectrum(est.grid[i], 1.0, P.omega_z, K) - 1.0, 2);
  }
  const double rms = std::sqrt(sum / static_cast<double>(est.grid.size()));
  return {rms < kPeriodogramRms, fmt("rms rel deviation %.4f over %ld bins, %zu trajectories", rms,
                                     static_cast<long>(est.grid.size()), kTrajectories)};
}

Outcome kicked_oscillator() {
  const auto mode = collective_mode(AtomicEnsemble::uniform(1.0e5), P);
  const double nbar = 1.9;
  const auto tc = oracle::default_trajectory_config(P, kTrajectories, 0.5e-3);
  const auto est = oracle::kicked_oscillator_heating(tc, nbar, P.omega_z, mode, P, threads());
  const double prediction = oracle::classical_heating_prediction(nbar, P.omega_z, mode, P);
  const double rel = std::abs(est.mean / prediction - 1.0);
  const double pull = std::abs(est.mean - prediction) / est.std_error;
  return {rel <= kKickedTol && pull <= kKickedSigmas,
          fmt("dE/dt = %.4e W vs %.4e W, rel %.4f, %.2f sigma", est.mean, prediction, rel, pull)};
}

Outcome heating_ratio() {
  const auto uniform = collective_mode(AtomicEnsemble::uniform(1.0e5), P);
  const double C = cooperativity(P);
  const double peak = heating_rates(1.9, P.omega_z, uniform, P).ratio;
  const bool exact = std::abs(peak - (1.0 + C)) <= 1e-12 * (1.0 + C);

  const auto mode = crossing_mode();
  const double factor = convolved_heating_per_photon(mode.delta_N, 1.9, mode, P);

  const Eigen::ArrayXd grid = Eigen::ArrayXd::LinSpaced(201, P.omega_z - 10.0 * K, P.omega_z + 10.0 * K);
  const auto curve = experiment::heating_curve(P, mode, P.sigma_jitter, std::span<const double>(grid.data(), grid.size()),
                                               experiment::drive_for(1.9, P));
  double curve_peak = 0.0;
  for (const auto& pt : curve) curve_peak = std::max(curve_peak, pt.ratio);

  return {exact && std::abs(factor - kFactorTarget) <= kFactorTol && curve_peak >= kCurveLow && curve_peak <= kCurveHigh,
          fmt("peak %.12g (1 + C = %.12g), factor %.4f, convolved curve peak %.3f", peak, 1.0 + C, factor, curve_peak)};
}

Outcome whiteness() {
  const Eigen::ArrayXd grid = Eigen::ArrayXd::LinSpaced(10000, -1e6 * K, 1e6 * K);
  const double dev = (oracle::output_whiteness_kernel(grid, 0.0, K) - 1.0).abs().maxCoeff();
  return {dev <= kWhitenessTol, fmt("max |kernel - 1| = %.2e", dev)};
}

Outcome round_trip() {
  const auto ensemble = AtomicEnsemble::uniform(1.0e5);
  const auto trace = experiment::forward_simulate(experiment::ProtocolConfig{}, P, ensemble);
  const auto analysis = experiment::analyze_trace(trace, P, ensemble);
  const double injected = trace.injected_ratio.maxCoeff();
  const auto peak = experiment::recovered_peak(analysis);
  const double rel = std::abs(peak.ratio / injected - 1.0);
  const double loss = trace.loss_rate.maxCoeff() / P.gamma_bg;
  const bool loss_ok = loss >= kLossTarget / kLossFactor && loss <= kLossTarget * kLossFactor;
  return {rel <= kPeakTol && loss_ok,
          fmt("recovered %.3f +- %.3f vs injected %.3f (rel %.4f), loss peak %.3f x background", peak.ratio,
              peak.std_error, injected, rel, loss)};
}

Outcome bistability() {
  const auto mode = crossing_mode();
  oracle::MeanFieldOptions opt;
  opt.quality_factor = 1.0;
  std::string detail;
  bool pass = true;
  for (const auto& [nbar_max, expect_multivalued] : {std::pair{3.85, true}, std::pair{0.5, false}}) {
    const auto sw = oracle::bistability_sweep(nbar_max, mode.delta_N - 12.0 * K, mode.delta_N + 4.0 * K, 161, 0.05,
                                              mode, P, opt);
    const auto off = std::max(std::abs(sw.ode_switch_up - sw.steady_switch_up),
                              std::abs(sw.ode_switch_down - sw.steady_switch_down));
    const bool ok = sw.hysteresis == sw.multivalued && sw.multivalued == expect_multivalued &&
                    (!sw.multivalued || off <= kMaxSwitchOffset);
    pass = pass && ok;
    detail += fmt("%snbar_max %.2f: multivalued %d hysteresis %d switch offset %ld", detail.empty() ? "" : "; ",
                  nbar_max, sw.multivalued, sw.hysteresis, static_cast<long>(off));
  }
  return {pass, detail};
}

Outcome technical_noise() {
  const auto mode = crossing_mode();
  std::vector<double> nbar;
  for (int i = 0; i < 12; ++i) nbar.push_back(0.2 * std::pow(100.0, i / 11.0));
  const double rin = experiment::rin_for_fraction(0.10, 1.9, P.omega_z, mode, P);
  const auto fit = experiment::technical_noise_scan(P, mode, nbar, rin, P.omega_z, 20240611);
  const double ra = std::abs(fit.linear / fit.linear_true - 1.0);
  const double rb = std::abs(fit.quadratic / fit.quadratic_true - 1.0);
  const double rf = std::abs(fit.fraction / 0.10 - 1.0);
  return {ra <= kSplitTol && rb <= kSplitTol && rf <= kSplitTol,
          fmt("linear rel %.4f, quadratic rel %.4f, technical fraction %.4f (injected 0.10)", ra, rb, fit.fraction)};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "cooperativity", 1.0, cooperativity_check},
      {2, "mirror-derived kappa", 1.0, mirror_kappa},
      {3, "noise-spectrum peak and transform", 1.0, spectrum_peak},
      {4, "Monte Carlo spectrum", 300.0, periodogram},
      {5, "kicked-oscillator heating", 600.0, kicked_oscillator},
      {6, "heating ratio", 60.0, heating_ratio},
      {7, "output whiteness", 1.0, whiteness},
      {8, "experiment round trip", 120.0, round_trip},
      {9, "bistability consistency", 60.0, bistability},
      {10, "technical-noise decomposition", 60.0, technical_noise},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && secs <= c.limit_s;
    failures += pass ? 0 : 1;
    std::printf("%s %d %s: %s [%.2f s, limit %.0f s]\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs,
                c.limit_s);
  }
  return failures == 0 ? 0 : 1;
}
