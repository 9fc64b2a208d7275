#include "backaction/oracle.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <numeric>

#include "backaction/constants.hpp"
#include "backaction/csv.hpp"
#include "backaction/errors.hpp"
#include "backaction/numerics.hpp"

namespace backaction::oracle {

std::vector<std::string> violations(const TrajectoryConfig& c, const PhysicalParams& params) {
  std::vector<std::string> out;
  if (!(c.dt > 0.0)) out.push_back("dt must be positive");
  if (!(c.dt < 0.1 / params.kappa)) out.push_back("dt must be below 0.1/kappa");
  if (!(c.dt < 0.1 / params.omega_z)) out.push_back("dt must be below 0.1/omega_z");
  if (!(c.duration > 0.0) || !(c.duration >= c.dt)) out.push_back("duration must cover at least one step");
  if (c.n_trajectories < 1) out.push_back("n_trajectories must be >= 1");
  return out;
}

void validate(const TrajectoryConfig& c, const PhysicalParams& params) {
  const auto v = violations(c, params);
  if (v.empty()) return;
  const std::string& first = v.front();
  const std::string key = first.starts_with("dt")         ? "dt"
                          : first.starts_with("duration") ? "duration"
                                                          : "n_trajectories";
  throw ConfigError(key, "trajectory config: " + first);
}

TrajectoryConfig default_trajectory_config(const PhysicalParams& params, std::size_t n_trajectories,
                                           double duration, std::uint64_t seed) {
  TrajectoryConfig c;
  c.seed = seed;
  c.n_trajectories = n_trajectories;
  c.dt = std::min(0.05 / params.kappa, 0.05 / params.omega_z);
  c.duration = duration;
  return c;
}

EnsembleEstimate estimate_from(std::span<const double> samples) {
  EnsembleEstimate e;
  e.n_samples = samples.size();
  if (samples.empty()) {
    e.mean = std::numeric_limits<double>::quiet_NaN();
    e.std_error = std::numeric_limits<double>::infinity();
    return e;
  }
  const double n = static_cast<double>(samples.size());
  e.mean = numerics::pairwise_sum(samples) / n;
  if (samples.size() < 2) {
    e.std_error = std::numeric_limits<double>::infinity();
    return e;
  }
  std::vector<double> sq(samples.size());
  std::transform(samples.begin(), samples.end(), sq.begin(), [m = e.mean](double x) { return (x - m) * (x - m); });
  e.std_error = std::sqrt(numerics::pairwise_sum(sq) / (n * (n - 1.0)));
  return e;
}

std::mt19937_64 trajectory_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

namespace {

// Exact discretisation of dc = (i Delta - kappa) c dt + noise at stationarity.
class ComplexOU {
 public:
  ComplexOU(std::mt19937_64& rng, double dt, double nbar, double Delta, double kappa)
      : rng_(rng),
        decay_(std::exp(std::complex<double>(-kappa * dt, Delta * dt))),
        kick_(std::sqrt(0.5 * nbar * -std::expm1(-2.0 * kappa * dt))) {
    const double s = std::sqrt(0.5 * nbar);
    state_ = {s * gauss_(rng_), s * gauss_(rng_)};
  }

  std::complex<double> value() const { return state_; }

  void advance() {
    const double re = gauss_(rng_);
    const double im = gauss_(rng_);
    state_ = decay_ * state_ + kick_ * std::complex<double>(re, im);
  }

 private:
  std::mt19937_64& rng_;
  std::normal_distribution<double> gauss_;
  std::complex<double> decay_;
  double kick_;
  std::complex<double> state_;
};

}  // namespace

Eigen::VectorXcd complex_photon_noise(std::mt19937_64& rng, std::size_t n_samples, double dt, double nbar,
                                      double Delta, double kappa) {
  if (!(nbar >= 0.0)) throw DomainError("complex_photon_noise: nbar must be >= 0");
  ComplexOU ou(rng, dt, nbar, Delta, kappa);
  Eigen::VectorXcd out(static_cast<Eigen::Index>(n_samples));
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    if (k) ou.advance();
    out[k] = ou.value();
  }
  return out;
}

Eigen::VectorXd synthesize_photon_noise(const TrajectoryConfig& config, double nbar, double Delta, double kappa,
                                        std::uint64_t trajectory) {
  PhysicalParams bounds;
  bounds.kappa = kappa;
  bounds.omega_z = kappa;
  validate(config, bounds);
  auto rng = trajectory_rng(config.seed, trajectory);
  const Eigen::VectorXcd c = complex_photon_noise(rng, config.n_steps(), config.dt, nbar, Delta, kappa);
  return std::sqrt(2.0) * c.real();
}

NoiseSpectrum noise_periodogram(const TrajectoryConfig& config, double nbar, double Delta, double kappa,
                                NoiseProcess process, double omega_max, int band, unsigned threads) {
  PhysicalParams bounds;
  bounds.kappa = kappa;
  bounds.omega_z = kappa;
  validate(config, bounds);
  if (band < 1) throw DomainError("noise_periodogram: band must be >= 1");
  const auto n = static_cast<Eigen::Index>(config.n_steps());
  if (n < 2 * band) throw DomainError("noise_periodogram: too few samples");
  const double dt = config.dt;
  const double resolution = constants::two_pi / (static_cast<double>(n) * dt);

  // FFT index order sorted by frequency, restricted to |omega| <= omega_max.
  std::vector<Eigen::Index> order;
  std::vector<double> freq;
  for (Eigen::Index j = -(n / 2); j < n - n / 2; ++j) {
    const double w = resolution * static_cast<double>(j);
    if (std::abs(w) > omega_max) continue;
    order.push_back(j < 0 ? j + n : j);
    freq.push_back(w);
  }
  const auto n_bands = static_cast<Eigen::Index>(order.size()) / band;
  if (n_bands < 1) throw DomainError("noise_periodogram: omega_max below the frequency resolution");

  auto task = [&](std::size_t, std::mt19937_64& rng) -> Eigen::ArrayXd {
    Eigen::VectorXcd x = complex_photon_noise(rng, static_cast<std::size_t>(n), dt, nbar, Delta, kappa);
    if (process == NoiseProcess::real_fluctuation) x = (std::sqrt(2.0) * x.real()).cast<std::complex<double>>();
    Eigen::FFT<double> fft;
    Eigen::VectorXcd spectrum;
    const Eigen::VectorXcd conj_x = x.conjugate();
    fft.fwd(spectrum, conj_x);  // conj of this is sum_k x_k e^{+i omega t_k}
    Eigen::ArrayXd bands = Eigen::ArrayXd::Zero(n_bands);
    const double scale = dt / static_cast<double>(n);
    for (Eigen::Index b = 0; b < n_bands; ++b) {
      for (int i = 0; i < band; ++i) bands[b] += std::norm(spectrum[order[b * band + i]]) * scale;
      bands[b] /= band;
    }
    return bands;
  };
  const auto per_traj = run_trajectories<Eigen::ArrayXd>(config.n_trajectories, config.seed, threads, task);

  NoiseSpectrum s;
  s.grid.resize(n_bands);
  s.values.resize(n_bands);
  s.std_error.resize(n_bands);
  s.provenance = SpectrumProvenance::oracle;
  std::vector<double> column(per_traj.size());
  for (Eigen::Index b = 0; b < n_bands; ++b) {
    double w = 0.0;
    for (int i = 0; i < band; ++i) w += freq[static_cast<std::size_t>(b * band + i)];
    s.grid[b] = w / band;
    for (std::size_t t = 0; t < per_traj.size(); ++t) column[t] = per_traj[t][b];
    const auto e = estimate_from(column);
    s.values[b] = e.mean;
    s.std_error[b] = e.std_error;
  }
  return s;
}

AutocorrelationEstimate sample_autocorrelation(const TrajectoryConfig& config, double nbar, double Delta,
                                               double kappa, double tau, unsigned threads) {
  PhysicalParams bounds;
  bounds.kappa = kappa;
  bounds.omega_z = kappa;
  validate(config, bounds);
  const auto n = static_cast<Eigen::Index>(config.n_steps());
  const auto lag = static_cast<Eigen::Index>(std::llround(tau / config.dt));
  if (lag < 0 || lag >= n) throw DomainError("sample_autocorrelation: lag outside the trajectory");
  auto task = [&](std::size_t, std::mt19937_64& rng) {
    const Eigen::VectorXcd c = complex_photon_noise(rng, static_cast<std::size_t>(n), config.dt, nbar, Delta, kappa);
    const Eigen::Index m = n - lag;
    const std::complex<double> sum = (c.tail(m).array() * c.head(m).array().conjugate()).sum();
    return sum / static_cast<double>(m);
  };
  const auto samples = run_trajectories<std::complex<double>>(config.n_trajectories, config.seed, threads, task);
  std::vector<double> re(samples.size()), im(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    re[i] = samples[i].real();
    im[i] = samples[i].imag();
  }
  return {estimate_from(re), estimate_from(im)};
}

double classical_heating_prediction(double nbar, double Delta, const CollectiveMode& mode,
                                    const PhysicalParams& params) {
  const double k2e2 = params.kappa * params.kappa * mode.epsilon * mode.epsilon;
  return constants::hbar * params.omega_z * k2e2 *
         symmetrized_noise_spectrum(params.omega_z, nbar, Delta, params.kappa);
}

EnsembleEstimate kicked_oscillator_heating(const TrajectoryConfig& config, double nbar, double Delta,
                                           const CollectiveMode& mode, const PhysicalParams& params,
                                           unsigned threads) {
  validate(config, params);
  if (mode.decoupled || mode.epsilon == 0.0 || nbar == 0.0) return {0.0, 0.0, config.n_trajectories};
  if (mode.epsilon > 0.5) throw DomainError("kicked_oscillator_heating: epsilon > 0.5 is outside the validated regime");

  const double dt = config.dt;
  const auto n = config.n_steps();
  const double w = params.omega_z;
  const double mass = constants::hbar / (2.0 * w * mode.z_ho * mode.z_ho);
  const double force_scale = params.kappa * mode.epsilon * constants::hbar / mode.z_ho * std::sqrt(2.0);
  const auto skip = static_cast<std::size_t>(std::ceil(5.0 / params.kappa / dt));
  if (skip + 16 >= n) throw ConfigError("duration", "kicked_oscillator_heating: duration too short for the fit window");
  const std::size_t stride = std::max<std::size_t>(1, (n - skip) / 512);

  struct Fit {
    double slope = 0.0;
    double curvature = 0.0;
  };
  auto task = [&](std::size_t, std::mt19937_64& rng) -> Fit {
    ComplexOU noise(rng, dt, nbar, Delta, params.kappa);
    double z = 0.0, p = 0.0;
    double f_now = force_scale * noise.value().real();
    std::vector<double> ts, es;
    ts.reserve((n - skip) / stride + 2);
    es.reserve(ts.capacity());
    auto rhs = [&](double zz, double pp, double f) { return std::pair{pp / mass, -mass * w * w * zz + f}; };
    for (std::size_t k = 0; k < n; ++k) {
      noise.advance();
      const double f_next = force_scale * noise.value().real();
      const double f_mid = 0.5 * (f_now + f_next);
      const auto [k1z, k1p] = rhs(z, p, f_now);
      const auto [k2z, k2p] = rhs(z + 0.5 * dt * k1z, p + 0.5 * dt * k1p, f_mid);
      const auto [k3z, k3p] = rhs(z + 0.5 * dt * k2z, p + 0.5 * dt * k2p, f_mid);
      const auto [k4z, k4p] = rhs(z + dt * k3z, p + dt * k3p, f_next);
      z += dt / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
      p += dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
      f_now = f_next;
      if (k + 1 >= skip && (k + 1 - skip) % stride == 0) {
        ts.push_back(static_cast<double>(k + 1) * dt);
        es.push_back(0.5 * p * p / mass + 0.5 * mass * w * w * z * z);
      }
    }
    const Eigen::Map<const Eigen::VectorXd> t(ts.data(), static_cast<Eigen::Index>(ts.size()));
    const Eigen::Map<const Eigen::VectorXd> e(es.data(), static_cast<Eigen::Index>(es.size()));
    const double t0 = t.mean();
    const double span = t.maxCoeff() - t.minCoeff();
    const Eigen::VectorXd x = (t.array() - t0) / span;
    const auto linear = numerics::ordinary_least_squares(numerics::polynomial_design(x, 1), e);
    const auto quadratic = numerics::ordinary_least_squares(numerics::polynomial_design(x, 2), e);
    return {linear.coefficients[1] / span, quadratic.coefficients[2] / (span * span)};
  };
  const auto fits = run_trajectories<Fit>(config.n_trajectories, config.seed, threads, task);

  std::vector<double> slopes(fits.size()), curvatures(fits.size());
  for (std::size_t i = 0; i < fits.size(); ++i) {
    slopes[i] = fits[i].slope;
    curvatures[i] = fits[i].curvature;
  }
  const auto slope = estimate_from(slopes);
  const auto curve = estimate_from(curvatures);
  const double window = static_cast<double>(n - skip) * dt;
  if (fits.size() > 1 && std::abs(curve.mean) > 4.0 * curve.std_error &&
      std::abs(curve.mean) * window > 0.1 * std::abs(slope.mean)) {
    throw NumericError("kicked_oscillator_heating: energy growth is not linear; use a shorter duration",
                       curve.mean * window / slope.mean);
  }
  return slope;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd MeanFieldTrajectory::energy(const CollectiveMode& mode, const PhysicalParams& params) const {
  const double mass = mode.n_eff * params.mass;
  const double w = params.omega_z;
  return (p.array().square() / (2.0 * mass) + 0.5 * mass * w * w * z.array().square()).matrix();
}

MeanFieldTrajectory meanfield_integrate(double duration, const MeanFieldDrive& drive, const CollectiveMode& mode,
                                        const PhysicalParams& params, const MeanFieldState& initial,
                                        const MeanFieldOptions& options) {
  if (mode.decoupled || !(mode.n_eff > 0.0)) throw DomainError("meanfield_integrate: mode is decoupled");
  if (!(duration > 0.0)) throw DomainError("meanfield_integrate: duration must be positive");
  if (!(drive.nbar_max >= 0.0)) throw DomainError("meanfield_integrate: nbar_max must be >= 0");
  if (!(options.quality_factor > 0.0)) throw DomainError("meanfield_integrate: quality factor must be positive");
  if (options.record_every < 1) throw DomainError("meanfield_integrate: record_every must be >= 1");

  using State = Eigen::Matrix<double, 5, 1>;  // Re b, Im b, Z, P, work
  const double kappa = params.kappa;
  const double w = params.omega_z;
  const double mass = mode.n_eff * params.mass;
  const double force = mode.n_eff * single_photon_force(params);
  const double gamma_m = std::isinf(options.quality_factor) ? 0.0 : w / options.quality_factor;
  const double amplitude = kappa * std::sqrt(drive.nbar_max);
  const double dt0 = options.dt > 0.0 ? options.dt : std::min(0.05 / kappa, 0.05 / w);
  const auto steps = static_cast<std::size_t>(std::ceil(duration / dt0 - 1e-9));
  const double dt = duration / static_cast<double>(steps);
  auto delta_pc = [&](double t) { return drive.delta_pc ? drive.delta_pc(t) : 0.0; };

  auto rhs = [&](double t, const State& y) {
    const double det = mode.delta_N - force * y[2] / constants::hbar - delta_pc(t);
    const double n = y[0] * y[0] + y[1] * y[1];
    const double v = y[3] / mass;
    State d;
    d[0] = det * y[1] - kappa * y[0] + amplitude;
    d[1] = -det * y[0] - kappa * y[1];
    d[2] = v;
    d[3] = -mass * w * w * y[2] + force * n - gamma_m * y[3];
    d[4] = force * n * v;
    return d;
  };

  const std::size_t n_records = steps / options.record_every + 1;
  MeanFieldTrajectory out;
  out.t.resize(static_cast<Eigen::Index>(n_records));
  out.b.resize(out.t.size());
  out.z.resize(out.t.size());
  out.p.resize(out.t.size());
  out.work.resize(out.t.size());
  State y;
  y << initial.b.real(), initial.b.imag(), initial.z, initial.p, 0.0;
  auto record = [&](Eigen::Index r, double t) {
    out.t[r] = t;
    out.b[r] = {y[0], y[1]};
    out.z[r] = y[2];
    out.p[r] = y[3];
    out.work[r] = y[4];
  };
  record(0, 0.0);
  Eigen::Index r = 1;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const State k1 = rhs(t, y);
    const State k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1);
    const State k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2);
    const State k4 = rhs(t + dt, y + dt * k3);
    y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!y.allFinite()) throw NumericError("meanfield_integrate: state diverged at t = " + std::to_string(t + dt), 0.0);
    if ((k + 1) % options.record_every == 0 && r < out.t.size()) record(r++, static_cast<double>(k + 1) * dt);
  }
  return out;
}

std::string to_csv(const MeanFieldTrajectory& tr) {
  csv::Table table({"t_s", "re_b", "im_b", "z_m", "p_si"});
  for (Eigen::Index i = 0; i < tr.t.size(); ++i) table.add_row({tr.t[i], tr.b[i].real(), tr.b[i].imag(), tr.z[i], tr.p[i]});
  return table.to_string();
}

namespace {

Eigen::Index largest_jump(const Eigen::VectorXd& x) {
  Eigen::Index best = 0;
  (x.tail(x.size() - 1) - x.head(x.size() - 1)).cwiseAbs().maxCoeff(&best);
  return best;
}

}  // namespace

BistabilitySweep bistability_sweep(double nbar_max, double lo, double hi, int n_grid, double sweep_time,
                                   const CollectiveMode& mode, const PhysicalParams& params,
                                   const MeanFieldOptions& options) {
  if (n_grid < 3 || !(hi > lo) || !(sweep_time > 0.0)) throw DomainError("bistability_sweep: invalid sweep");
  BistabilitySweep s;
  s.grid = Eigen::VectorXd::LinSpaced(n_grid, lo, hi);
  s.steady_up.resize(n_grid);
  s.steady_down.resize(n_grid);
  for (int i = 0; i < n_grid; ++i) {
    const auto up = steady_intracavity(s.grid[i], nbar_max, mode, params, SweepBranch::sweep_up);
    s.steady_up[i] = up.nbar;
    s.steady_down[i] = steady_intracavity(s.grid[i], nbar_max, mode, params, SweepBranch::sweep_down).nbar;
    s.multivalued = s.multivalued || up.multivalued();
  }

  // Grid points are hit exactly on integer multiples of the record interval.
  const double step_time = sweep_time / (n_grid - 1);
  const double dt0 = options.dt > 0.0 ? options.dt : std::min(0.05 / params.kappa, 0.05 / params.omega_z);
  const auto per_step = static_cast<std::size_t>(std::ceil(step_time / dt0));
  MeanFieldOptions opt = options;
  opt.dt = step_time / static_cast<double>(per_step);
  opt.record_every = per_step;
  MeanFieldDrive drive;
  drive.nbar_max = nbar_max;
  drive.delta_pc = [=](double t) {
    const double u = t <= sweep_time ? t / sweep_time : 2.0 - t / sweep_time;
    return lo + (hi - lo) * std::clamp(u, 0.0, 1.0);
  };

  const auto start = steady_intracavity(lo, nbar_max, mode, params, SweepBranch::sweep_up);
  MeanFieldState init;
  init.b = std::sqrt(nbar_max) / std::complex<double>(1.0, -start.Delta / params.kappa);
  init.z = static_displacement(start.nbar, params);
  const auto tr = meanfield_integrate(2.0 * sweep_time, drive, mode, params, init, opt);
  const Eigen::VectorXd n = tr.nbar();
  s.ode_up = n.head(n_grid);
  s.ode_down.resize(n_grid);
  for (int i = 0; i < n_grid; ++i) s.ode_down[i] = n[2 * (n_grid - 1) - i];

  s.ode_switch_up = largest_jump(s.ode_up);
  s.ode_switch_down = largest_jump(s.ode_down);
  s.steady_switch_up = largest_jump(s.steady_up);
  s.steady_switch_down = largest_jump(s.steady_down);
  s.hysteresis = (s.ode_up - s.ode_down).cwiseAbs().maxCoeff() > 0.1 * nbar_max;
  return s;
}

// ---------------------------------------------------------------------------

Eigen::ArrayXd output_whiteness_kernel(const Eigen::ArrayXd& omega_grid, double omega_c_prime, double kappa) {
  Eigen::ArrayXd out(omega_grid.size());
  for (Eigen::Index i = 0; i < omega_grid.size(); ++i) {
    const double delta = omega_grid[i] - omega_c_prime;
    const std::complex<double> l = lorentzian_response(omega_grid[i], omega_c_prime, kappa);
    out[i] = 2.0 * kappa * kappa / (kappa * kappa + delta * delta) - (l + std::conj(l)).real() + 1.0;
  }
  return out;
}

TransformCheck spectrum_ft_check(double nbar, double Delta, double kappa, const Eigen::ArrayXd& omega_grid) {
  if ((omega_grid.abs() > 10.0 * kappa * (1.0 + 1e-12)).any()) {
    throw DomainError("spectrum_ft_check: grid must lie within |omega| <= 10 kappa");
  }
  // C(-tau) = conj C(tau), so the full-line transform is 2 Re \int_0^inf.
  const double tau_max = 50.0 / kappa;
  std::vector<double> points(101);
  for (std::size_t i = 0; i < points.size(); ++i) points[i] = tau_max * static_cast<double>(i) / 100.0;
  numerics::QuadratureOptions opt;
  opt.rel_tol = 1e-12;

  TransformCheck out;
  out.transform.resize(omega_grid.size());
  for (Eigen::Index i = 0; i < omega_grid.size(); ++i) {
    const double w = omega_grid[i];
    auto integrand = [&](double tau) { return std::exp(std::complex<double>(0.0, w * tau)) * two_time_correlation(tau, nbar, Delta, kappa); };
    const auto half = numerics::integrate(integrand, std::span<const double>(points), opt);
    out.transform[i] = 2.0 * half.value.real();
    const double exact = photon_noise_spectrum(w, nbar, Delta, kappa);
    const double rel = exact == 0.0 ? std::abs(out.transform[i]) : std::abs(out.transform[i] - exact) / exact;
    out.max_relative_error = std::max(out.max_relative_error, rel);
  }
  return out;
}

}  // namespace backaction::oracle
