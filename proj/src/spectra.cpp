#include "backaction/spectra.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>

#include "backaction/errors.hpp"
#include "backaction/numerics.hpp"

namespace backaction {

void validate(const NoiseSpectrum& s) {
  std::vector<std::string> out;
  if (s.grid.size() != s.values.size()) out.push_back("grid and values differ in length");
  if (s.std_error.size() != 0 && s.std_error.size() != s.values.size()) out.push_back("std_error length mismatch");
  for (Eigen::Index i = 1; i < s.grid.size(); ++i) {
    if (!(s.grid[i] > s.grid[i - 1])) {
      out.push_back("grid must be strictly increasing");
      break;
    }
  }
  if ((s.values < 0.0).any()) out.push_back("spectral density must be non-negative");
  if (!out.empty()) throw ValidationError(std::move(out));
}

NoiseSpectrum analytic_spectrum(const Eigen::ArrayXd& grid, double nbar, double Delta, double kappa) {
  NoiseSpectrum s;
  s.grid = grid;
  s.values = photon_noise_spectrum(grid, nbar, Delta, kappa);
  s.std_error = Eigen::ArrayXd::Zero(grid.size());
  s.provenance = SpectrumProvenance::analytic;
  return s;
}

double freespace_heating(double nbar, const PhysicalParams& params) {
  const double f0 = single_photon_force(params);
  return (f0 * f0 / (2.0 * params.mass)) * (nbar / params.kappa) / cooperativity(params);
}

double backaction_heating(double nbar, double Delta, const CollectiveMode& mode, const PhysicalParams& params) {
  if (!(mode.n_atoms > 0.0) || mode.decoupled) return 0.0;
  const double s_minus = photon_noise_spectrum(-params.omega_z, nbar, Delta, params.kappa);
  const double k2e2 = params.kappa * params.kappa * mode.epsilon * mode.epsilon;
  return constants::hbar * params.omega_z * k2e2 * s_minus / mode.n_atoms;
}

double backaction_ratio(double Delta, const CollectiveMode& mode, const PhysicalParams& params) {
  return backaction_heating(1.0, Delta, mode, params) / freespace_heating(1.0, params);
}

HeatingRates heating_rates(double nbar, double Delta, const CollectiveMode& mode, const PhysicalParams& params) {
  HeatingRates r{};
  r.r_c = backaction_heating(nbar, Delta, mode, params);
  r.r_fs = freespace_heating(nbar, params);
  r.ratio = 1.0 + backaction_ratio(Delta, mode, params);
  return r;
}

OccupationRate occupation_rate(double occupation, double nbar, double Delta, const CollectiveMode& mode,
                               const PhysicalParams& params, double warn_threshold) {
  if (!(occupation >= 0.0)) throw DomainError("occupation_rate: occupation must be >= 0");
  const double s_minus = photon_noise_spectrum(-params.omega_z, nbar, Delta, params.kappa);
  const double s_plus = photon_noise_spectrum(params.omega_z, nbar, Delta, params.kappa);
  const double k2e2 = params.kappa * params.kappa * mode.epsilon * mode.epsilon;
  return {k2e2 * (s_minus + (s_minus - s_plus) * occupation), occupation > warn_threshold};
}

namespace {

// Self-consistency in reduced units: x = nbar / nbar_max, b = (delta_pc - delta_N) / kappa,
// a = shift_per_photon * nbar_max / kappa. Steady states are the roots in [0, 1] of
//   G(x) = a^2 x^3 + 2 a b x^2 + (1 + b^2) x - 1.
struct ReducedCubic {
  double a;
  double b;

  double operator()(double x) const {
    const double s = b + a * x;
    return x * (1.0 + s * s) - 1.0;
  }
};

// Roots of G in [0, 1], ascending. G(0) = -1 and G(1) = (a + b)^2 >= 0, and G
// is monotone between the roots of G'(x) = 3 a^2 x^2 + 4 a b x + 1 + b^2.
std::vector<double> reduced_roots(double a, double b) {
  const ReducedCubic g{a, b};
  std::vector<double> edges{0.0};
  if (a > 0.0 && b * b > 3.0) {
    const double root = std::sqrt(b * b - 3.0);
    std::array<double, 2> crit{(-2.0 * b - root) / (3.0 * a), (-2.0 * b + root) / (3.0 * a)};
    std::sort(crit.begin(), crit.end());
    for (double c : crit) {
      if (c > 0.0 && c < 1.0) edges.push_back(c);
    }
  }
  edges.push_back(1.0);

  std::vector<double> roots;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const double lo = edges[i];
    const double hi = edges[i + 1];
    const double g_lo = g(lo);
    const double g_hi = g(hi);
    if (g_lo == 0.0) {
      if (roots.empty() || roots.back() != lo) roots.push_back(lo);
      continue;
    }
    if (g_hi == 0.0) {
      roots.push_back(hi);
      continue;
    }
    if ((g_lo < 0.0) != (g_hi < 0.0)) roots.push_back(numerics::bisect(g, lo, hi, 1e-15));
  }
  if (roots.empty()) throw NumericError("steady_intracavity: no root bracketed", std::abs(g(1.0)));
  return roots;
}

}  // namespace

SteadyState steady_intracavity(double delta_pc, double nbar_max, const CollectiveMode& mode,
                               const PhysicalParams& params, SweepBranch branch) {
  if (!(nbar_max >= 0.0)) throw DomainError("steady_intracavity: nbar_max must be >= 0");
  const double detuning = delta_pc - mode.delta_N;
  if (nbar_max == 0.0) return {0.0, detuning, 1};
  const double a = mode.shift_per_photon * nbar_max / params.kappa;
  const double b = detuning / params.kappa;
  if (a == 0.0) {
    const double nbar = nbar_max / (1.0 + b * b);
    return {nbar, detuning, 1};
  }
  const auto roots = reduced_roots(a, b);
  const double x = branch == SweepBranch::sweep_up ? roots.front() : roots.back();
  const double nbar = nbar_max * x;
  return {nbar, detuning + mode.shift_per_photon * nbar, static_cast<int>(roots.size())};
}

std::vector<double> bistable_folds(double nbar_max, const CollectiveMode& mode, const PhysicalParams& params) {
  // Along the lineshape parameterised by y = Delta / kappa, the probe detuning is
  // delta_pc = delta_N + kappa (y - a / (1 + y^2)); folds are its turning points,
  // the roots of f(y) = (1 + y^2)^2 + 2 a y on y < 0.
  const double a = mode.shift_per_photon * nbar_max / params.kappa;
  if (!(a > 0.0)) return {};
  auto f = [a](double y) {
    const double q = 1.0 + y * y;
    return q * q + 2.0 * a * y;
  };
  auto df = [a](double y) { return 4.0 * y * (1.0 + y * y) + 2.0 * a; };
  const double y_far = -std::cbrt(2.0 * a) - 1.0;
  const double y_min = numerics::bisect(df, y_far, 0.0, 1e-14);
  if (f(y_min) >= 0.0) return {};
  const double y1 = numerics::bisect(f, y_far, y_min, 1e-14);
  const double y2 = numerics::bisect(f, y_min, 0.0, 1e-14);
  std::vector<double> folds;
  for (double y : {y1, y2}) folds.push_back(mode.delta_N + params.kappa * (y - a / (1.0 + y * y)));
  std::sort(folds.begin(), folds.end());
  return folds;
}

JitterAverage jitter_average(double delta_pc, double nbar_max, const CollectiveMode& mode,
                             const PhysicalParams& params, SweepBranch branch) {
  auto sample = [&](double detuning) {
    const auto ss = steady_intracavity(detuning, nbar_max, mode, params, branch);
    return Eigen::Vector2d(ss.nbar, ss.nbar * (1.0 + backaction_ratio(ss.Delta, mode, params)));
  };
  const double sigma = params.sigma_jitter;
  if (sigma == 0.0) {
    const Eigen::Vector2d v = sample(delta_pc);
    return {v[0], v[1], 0.0};
  }
  const double norm = 1.0 / (sigma * std::sqrt(constants::two_pi));
  auto integrand = [&](double x) -> Eigen::Vector2d {
    const double u = x / sigma;
    return sample(delta_pc - x) * (norm * std::exp(-0.5 * u * u));
  };
  const double reach = 8.0 * sigma;
  std::vector<double> points{-reach};
  for (double fold : bistable_folds(nbar_max, mode, params)) {
    const double x = delta_pc - fold;
    if (x > -reach && x < reach) points.push_back(x);
  }
  points.push_back(reach);
  std::sort(points.begin(), points.end());
  numerics::QuadratureOptions opt;
  opt.rel_tol = 1e-10;
  const auto result = numerics::integrate(integrand, std::span<const double>(points), opt);
  return {result.value[0], result.value[1], result.error};
}

double voigt_transmission(double delta_pc, double nbar_max, const CollectiveMode& mode, const PhysicalParams& params,
                          SweepBranch branch) {
  if (!(params.sigma_jitter >= 0.0)) throw DomainError("voigt_transmission: sigma_jitter must be >= 0");
  return jitter_average(delta_pc, nbar_max, mode, params, branch).nbar;
}

double convolved_heating_per_photon(double delta_pc, double nbar_max, const CollectiveMode& mode,
                                    const PhysicalParams& params) {
  const auto avg = jitter_average(delta_pc, nbar_max, mode, params);
  const double peak = 1.0 + backaction_ratio(params.omega_z, mode, params);
  if (!(avg.nbar > 0.0)) throw DomainError("convolved_heating_per_photon: no photons at this detuning");
  return (avg.nbar_times_ratio / avg.nbar) / peak;
}

double voigt_peak_fraction(const PhysicalParams& params) {
  const double sigma = params.sigma_jitter;
  if (sigma == 0.0) return 1.0;
  const double k = params.kappa;
  const double norm = 1.0 / (sigma * std::sqrt(constants::two_pi));
  auto integrand = [&](double x) {
    const double u = x / sigma;
    return norm * std::exp(-0.5 * u * u) / (1.0 + (x / k) * (x / k));
  };
  return numerics::integrate(integrand, -8.0 * sigma, 8.0 * sigma).value;
}

}  // namespace backaction
