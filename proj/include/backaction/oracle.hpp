#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <complex>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "backaction/collective.hpp"
#include "backaction/params.hpp"
#include "backaction/spectra.hpp"

// Independent numerical checks of the closed-form results: stochastic
// trajectory ensembles, quadrature transforms and mean-field integration.
namespace backaction::oracle {

struct TrajectoryConfig {
  std::uint64_t seed = 20240611;
  std::size_t n_trajectories = 1000;
  double dt = 0.0;        // s
  double duration = 0.0;  // s, per trajectory

  std::size_t n_steps() const { return static_cast<std::size_t>(duration / dt + 0.5); }
};

std::vector<std::string> violations(const TrajectoryConfig& config, const PhysicalParams& params);
/// Throws ConfigError naming the first violated field.
void validate(const TrajectoryConfig& config, const PhysicalParams& params);

/// dt = min(0.05 / kappa, 0.05 / omega_z) and the given length.
TrajectoryConfig default_trajectory_config(const PhysicalParams& params, std::size_t n_trajectories,
                                           double duration, std::uint64_t seed = 20240611);

struct EnsembleEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n_samples = 0;
};

/// Mean and standard error of independent samples, order-independent sums.
EnsembleEstimate estimate_from(std::span<const double> samples);

// ---------------------------------------------------------------------------
// Trajectory engine
// ---------------------------------------------------------------------------

/// Generator for trajectory `index` of the stream `seed`; independent of the
/// order and thread on which trajectories are run.
std::mt19937_64 trajectory_rng(std::uint64_t seed, std::uint64_t index);

/// Runs task(index, rng) for every trajectory on `threads` workers and returns
/// results in index order.
template <typename Result, typename Task>
std::vector<Result> run_trajectories(std::size_t n, std::uint64_t seed, unsigned threads, Task&& task) {
  std::vector<Result> out(n);
  const std::size_t workers = std::clamp<std::size_t>(threads == 0 ? 1 : threads, 1, std::max<std::size_t>(n, 1));
  std::vector<std::exception_ptr> failures(workers);
  auto work = [&](std::size_t first) {
    try {
      for (std::size_t i = first; i < n; i += workers) {
        auto rng = trajectory_rng(seed, i);
        out[i] = task(i, rng);
      }
    } catch (...) {
      failures[first] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Photon-number noise
// ---------------------------------------------------------------------------

/// Stationary complex Ornstein-Uhlenbeck process with <c(t + tau) c*(t)> =
/// nbar exp((i Delta - kappa) tau), advanced by its exact one-step update.
Eigen::VectorXcd complex_photon_noise(std::mt19937_64& rng, std::size_t n_samples, double dt, double nbar,
                                      double Delta, double kappa);

/// Real fluctuation sqrt(2) Re c(t): autocorrelation nbar cos(Delta tau) e^{-kappa |tau|},
/// the classical force noise that kicks the oscillator.
Eigen::VectorXd synthesize_photon_noise(const TrajectoryConfig& config, double nbar, double Delta, double kappa,
                                        std::uint64_t trajectory = 0);

enum class NoiseProcess { complex_field, real_fluctuation };

/// Band-averaged periodogram over the trajectory ensemble on the grid |omega| <=
/// omega_max. The complex process estimates photon_noise_spectrum, the real
/// one its symmetrised part. Bins of `band` adjacent frequencies are averaged.
NoiseSpectrum noise_periodogram(const TrajectoryConfig& config, double nbar, double Delta, double kappa,
                                NoiseProcess process, double omega_max, int band = 4, unsigned threads = 1);

struct AutocorrelationEstimate {
  EnsembleEstimate real;
  EnsembleEstimate imag;

  std::complex<double> value() const { return {real.mean, imag.mean}; }
};

/// Lag-tau autocorrelation <c(t + tau) c*(t)> of the complex process; each
/// trajectory contributes one time-averaged sample.
AutocorrelationEstimate sample_autocorrelation(const TrajectoryConfig& config, double nbar, double Delta,
                                               double kappa, double tau, unsigned threads = 1);

// ---------------------------------------------------------------------------
// Kicked collective oscillator
// ---------------------------------------------------------------------------

/// hbar omega_z kappa^2 eps^2 [S(omega_z) + S(-omega_z)] / 2, W.
double classical_heating_prediction(double nbar, double Delta, const CollectiveMode& mode,
                                    const PhysicalParams& params);

/// Energy growth of the collective oscillator (from rest) under the force
/// kappa eps hbar / Z_ho * dn(t). The slope of E(t) is fitted per trajectory
/// after a 5 / kappa transient. Throws NumericError when a quadratic term is
/// significant (growth not linear over the window).
EnsembleEstimate kicked_oscillator_heating(const TrajectoryConfig& config, double nbar, double Delta,
                                           const CollectiveMode& mode, const PhysicalParams& params,
                                           unsigned threads = 1);

// ---------------------------------------------------------------------------
// Mean-field dynamics
// ---------------------------------------------------------------------------

struct MeanFieldState {
  std::complex<double> b{0.0, 0.0};  // intracavity amplitude in the probe frame, |b|^2 = nbar
  double z = 0.0;                    // collective displacement, m
  double p = 0.0;                    // collective momentum, kg m/s
};

struct MeanFieldDrive {
  double nbar_max = 0.0;                 // resonant photon number
  std::function<double(double)> delta_pc;  // probe detuning from the bare cavity at time t
};

struct MeanFieldOptions {
  double quality_factor = 40.0;  // gamma_m = omega_z / Q; infinity disables damping
  double dt = 0.0;               // 0: min(0.05 / kappa, 0.05 / omega_z)
  std::size_t record_every = 1;
};

struct MeanFieldTrajectory {
  Eigen::VectorXd t;
  Eigen::VectorXcd b;
  Eigen::VectorXd z;
  Eigen::VectorXd p;
  Eigen::VectorXd work;  // integral of the optical force times velocity, J

  Eigen::VectorXd nbar() const { return b.cwiseAbs2(); }
  /// Collective oscillator energy at each record.
  Eigen::VectorXd energy(const CollectiveMode& mode, const PhysicalParams& params) const;
};

/// Fixed-step RK4 integration of the c-number field and collective-oscillator
/// equations over [0, duration]. Throws NumericError on non-finite state.
MeanFieldTrajectory meanfield_integrate(double duration, const MeanFieldDrive& drive, const CollectiveMode& mode,
                                        const PhysicalParams& params, const MeanFieldState& initial = {},
                                        const MeanFieldOptions& options = {});

/// Rows `t_s,re_b,im_b,z_m,p_si`.
std::string to_csv(const MeanFieldTrajectory& trajectory);

struct BistabilitySweep {
  Eigen::VectorXd grid;        // probe detunings delta_pc, ascending
  Eigen::VectorXd ode_up;      // photon number on the rising sweep
  Eigen::VectorXd ode_down;    // on the falling sweep
  Eigen::VectorXd steady_up;   // steady_intracavity, sweep_up branch
  Eigen::VectorXd steady_down; // sweep_down branch
  Eigen::Index ode_switch_up = -1;      // index i of the largest jump between grid i and i+1
  Eigen::Index ode_switch_down = -1;
  Eigen::Index steady_switch_up = -1;
  Eigen::Index steady_switch_down = -1;
  bool multivalued = false;  // solver found several steady states somewhere on the grid
  bool hysteresis = false;   // rising and falling ODE sweeps differ

  double grid_step() const { return grid.size() > 1 ? grid[1] - grid[0] : 0.0; }
};

/// Slow triangle sweep of the probe detuning through [lo, hi] with the
/// mean-field ODE, sampled on `n_grid` points per direction, next to the
/// steady-state branches on the same grid.
BistabilitySweep bistability_sweep(double nbar_max, double lo, double hi, int n_grid, double sweep_time,
                                   const CollectiveMode& mode, const PhysicalParams& params,
                                   const MeanFieldOptions& options = {});

// ---------------------------------------------------------------------------
// Analytic cross-checks
// ---------------------------------------------------------------------------

/// 2 kappa^2 / (kappa^2 + delta^2) - (L + L*) + 1 per grid frequency, with L
/// the cavity response; identically 1.
Eigen::ArrayXd output_whiteness_kernel(const Eigen::ArrayXd& omega_grid, double omega_c_prime, double kappa);

struct TransformCheck {
  Eigen::ArrayXd transform;  // quadrature of \int e^{i omega tau} C(tau) dtau
  double max_relative_error = 0.0;
};

/// Adaptive quadrature of the two-time correlation's transform against
/// photon_noise_spectrum. Grid must lie within |omega| <= 10 kappa.
TransformCheck spectrum_ft_check(double nbar, double Delta, double kappa, const Eigen::ArrayXd& omega_grid);

}  // namespace backaction::oracle
