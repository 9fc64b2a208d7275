#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <complex>

#include "backaction/collective.hpp"
#include "backaction/errors.hpp"
#include "backaction/numerics.hpp"
#include "backaction/spectra.hpp"

using namespace backaction;

namespace {
// Independent evaluations (CODATA 2018, default apparatus).
constexpr double kTwoOverKappa = 4.822877063390768e-7;  // s
constexpr double kRfsPerPhoton = 1.9544933980949423e-30;  // W
constexpr double kShiftPerPhoton = 5.77901e6;            // rad/s, N = 1e5 uniform
constexpr double kVoigtPeak = 0.4938166906705724;
constexpr double kFoldLow = -5.408926623402755;   // (delta_pc - delta_N) / kappa
constexpr double kFoldHigh = -3.062320375401191;

const PhysicalParams P{};
const double K = P.kappa;

CollectiveMode mode_at(double n) { return collective_mode(AtomicEnsemble::uniform(n), P); }
double crossing_atoms() { return atoms_from_shift(2.0 * M_PI * 40e6, P); }

PhysicalParams unjittered() {
  PhysicalParams p;
  p.sigma_jitter = 0.0;
  return p;
}
}  // namespace

TEST_CASE("cavity response") {
  CHECK(lorentzian_response(3.0, 3.0, K) == std::complex<double>(1.0, 0.0));
  CHECK(std::norm(lorentzian_response(K, 0.0, K)) == doctest::Approx(0.5).epsilon(1e-15));
  auto l2 = [](double w) { return std::norm(lorentzian_response(w, 0.0, 1.0)); };
  const double area = numerics::integrate_real_line(l2).value;
  CHECK(area == doctest::Approx(M_PI).epsilon(1e-8));
}

TEST_CASE("noise spectrum peak and tails") {
  for (double nbar : {0.1, 1.0, 1.9, 20.0}) {
    CHECK(photon_noise_spectrum(-P.omega_z, nbar, P.omega_z, K) / nbar == doctest::Approx(2.0 / K).epsilon(1e-15));
  }
  CHECK(2.0 / K == doctest::Approx(kTwoOverKappa).epsilon(1e-14));
  CHECK(2.0 / K == doctest::Approx(4.8e-7).epsilon(0.01));
  CHECK(photon_noise_spectrum(1e12 * K, 1.0, 0.0, K) < 1e-30);
  CHECK(photon_noise_spectrum(-1e12 * K, 1.0, 0.0, K) < 1e-30);
}

TEST_CASE("noise spectrum reflection symmetry and asymmetry") {
  for (double w : {-3.0 * K, -0.2 * K, 0.0, 1.7 * K}) {
    for (double d : {-2.0 * K, 0.3 * K, P.omega_z}) {
      CHECK(photon_noise_spectrum(w, 1.3, d, K) == doctest::Approx(photon_noise_spectrum(-w, 1.3, -d, K)).epsilon(1e-15));
    }
  }
  CHECK(photon_noise_spectrum(-P.omega_z, 1.0, P.omega_z, K) > photon_noise_spectrum(P.omega_z, 1.0, P.omega_z, K));
}

TEST_CASE("noise spectrum integrates to the coherent-state variance") {
  const double nbar = 1.9;
  auto s = [&](double w) { return photon_noise_spectrum(w, nbar, 0.4 * K, K) / (2.0 * M_PI); };
  auto scaled = [&](double x) { return K * s(K * x); };
  CHECK(numerics::integrate_real_line(scaled).value == doctest::Approx(nbar).epsilon(1e-3));
}

TEST_CASE("two-time correlation") {
  CHECK(two_time_correlation(0.0, 1.9, P.omega_z, K) == std::complex<double>(1.9, 0.0));
  CHECK(std::abs(two_time_correlation(100.0 / K, 1.9, P.omega_z, K)) < 1e-40);
  const auto c = two_time_correlation(0.7 / K, 1.0, P.omega_z, K);
  CHECK(std::abs(c) == doctest::Approx(std::exp(-0.7)).epsilon(1e-14));
  const auto cm = two_time_correlation(-0.7 / K, 1.0, P.omega_z, K);
  CHECK(std::abs(cm - std::conj(c)) < 1e-15);
}

TEST_CASE("analytic spectrum record") {
  const Eigen::ArrayXd grid = Eigen::ArrayXd::LinSpaced(11, -5 * K, 5 * K);
  const auto s = analytic_spectrum(grid, 1.0, 0.0, K);
  CHECK(s.provenance == SpectrumProvenance::analytic);
  CHECK_NOTHROW(validate(s));
  auto bad = s;
  bad.grid[3] = bad.grid[2];
  CHECK_THROWS_AS(validate(bad), ValidationError);
  bad = s;
  bad.values[0] = -1.0;
  CHECK_THROWS_AS(validate(bad), ValidationError);
}

TEST_CASE("free-space heating") {
  CHECK(freespace_heating(0.0, P) == 0.0);
  CHECK(freespace_heating(1.0, P) == doctest::Approx(kRfsPerPhoton).epsilon(1e-12));
  CHECK(freespace_heating(3.0, P) == doctest::Approx(3.0 * freespace_heating(1.0, P)).epsilon(1e-15));
}

TEST_CASE("backaction heating relative to free space for a uniform ensemble") {
  const double C = cooperativity(P);
  const auto m = mode_at(1e5);
  CHECK(backaction_ratio(P.omega_z, m, P) == doctest::Approx(C).epsilon(1e-12));
  CHECK(backaction_ratio(P.omega_z + K, m, P) == doctest::Approx(C / 2.0).epsilon(1e-12));
  CHECK(backaction_ratio(P.omega_z + 10 * K, m, P) == doctest::Approx(C / 101.0).epsilon(1e-12));
  CHECK(backaction_ratio(P.omega_z - 10 * K, m, P) == doctest::Approx(C / 101.0).epsilon(1e-12));
  for (double n : {1e3, 3.3e4, 2e5}) {
    for (double d : {-3.0 * K, 0.0, P.omega_z, 4.0 * K}) {
      const auto mode = mode_at(n);
      const double lorentz = C / (1.0 + std::pow((d - P.omega_z) / K, 2));
      for (double nbar : {0.2, 1.9, 7.0}) {
        const auto r = heating_rates(nbar, d, mode, P);
        CHECK(r.r_c == doctest::Approx(r.r_fs * lorentz).epsilon(1e-12));
        CHECK(r.ratio == doctest::Approx(1.0 + lorentz).epsilon(1e-12));
        CHECK(r.ratio >= 1.0);
      }
    }
  }
}

TEST_CASE("decoupled ensemble has no backaction heating") {
  Eigen::VectorXd nodes = Eigen::VectorXd::Zero(100);
  const auto m = collective_mode(AtomicEnsemble::at_positions(nodes), P);
  CHECK(backaction_heating(1.9, P.omega_z, m, P) == 0.0);
  CHECK(heating_rates(1.9, P.omega_z, m, P).ratio == 1.0);
}

TEST_CASE("occupation rate") {
  const auto m = mode_at(1e5);
  const double k2e2 = K * K * m.epsilon * m.epsilon;
  const double s_minus = photon_noise_spectrum(-P.omega_z, 1.9, P.omega_z, K);
  const auto r0 = occupation_rate(0.0, 1.9, P.omega_z, m, P);
  CHECK(r0.rate == doctest::Approx(k2e2 * s_minus).epsilon(1e-14));
  CHECK(r0.rate == doctest::Approx(m.n_atoms * backaction_heating(1.9, P.omega_z, m, P) /
                                   (constants::hbar * P.omega_z))
                       .epsilon(1e-12));
  // Delta = 0: the two sidebands are equal, the occupation term vanishes.
  CHECK(occupation_rate(3.0, 1.0, 0.0, m, P).rate == doctest::Approx(occupation_rate(0.0, 1.0, 0.0, m, P).rate));
  // Delta > 0: anti-cooling.
  CHECK(occupation_rate(3.0, 1.0, P.omega_z, m, P).rate > occupation_rate(0.0, 1.0, P.omega_z, m, P).rate);
  CHECK(occupation_rate(3.0, 1.0, -P.omega_z, m, P).rate < occupation_rate(0.0, 1.0, -P.omega_z, m, P).rate);
  CHECK(occupation_rate(11.0, 1.0, 0.0, m, P).beyond_small_occupation);
  CHECK_FALSE(occupation_rate(9.0, 1.0, 0.0, m, P).beyond_small_occupation);
  CHECK_THROWS_AS(occupation_rate(-1.0, 1.0, 0.0, m, P), DomainError);
}

TEST_CASE("shift per photon of the default ensemble") {
  CHECK(mode_at(1e5).shift_per_photon == doctest::Approx(kShiftPerPhoton).epsilon(1e-5));
}

TEST_CASE("steady state without granularity is the bare Lorentzian") {
  Eigen::VectorXd nodes = Eigen::VectorXd::Zero(100);
  auto m = collective_mode(AtomicEnsemble::at_positions(nodes), P);
  m.delta_N = 1e8;
  for (double d : {-3.0 * K, -0.5 * K, 0.0, 2.0 * K}) {
    const auto ss = steady_intracavity(m.delta_N + d, 1.9, m, P, SweepBranch::sweep_up);
    CHECK(ss.nbar == doctest::Approx(1.9 / (1.0 + d * d / (K * K))).epsilon(1e-14));
    CHECK(ss.n_solutions == 1);
  }
}

TEST_CASE("steady state exactly on the shifted resonance") {
  const auto m = mode_at(1e5);
  const double nmax = 0.5;
  const auto ss = steady_intracavity(m.delta_N - m.shift_per_photon * nmax, nmax, m, P, SweepBranch::sweep_up);
  CHECK(ss.nbar == doctest::Approx(nmax).epsilon(1e-12));
  CHECK(std::abs(ss.Delta) < 1e-6 * K);
}

TEST_CASE("steady state is self-consistent on both branches") {
  const auto m = mode_at(1e5);
  const double nmax = 3.85;
  for (double d = -8.0; d <= 2.0; d += 0.25) {
    for (auto b : {SweepBranch::sweep_up, SweepBranch::sweep_down}) {
      const auto ss = steady_intracavity(m.delta_N + d * K, nmax, m, P, b);
      const double rhs = nmax * std::norm(lorentzian_response(0.0, -ss.Delta, K));
      CHECK(ss.nbar == doctest::Approx(rhs).epsilon(1e-10));
    }
  }
  CHECK(steady_intracavity(m.delta_N, 0.0, m, P, SweepBranch::sweep_up).nbar == 0.0);
  CHECK_THROWS_AS(steady_intracavity(m.delta_N, -1.0, m, P, SweepBranch::sweep_up), DomainError);
}

TEST_CASE("bistable region and folds") {
  const auto m = mode_at(1e5);
  const double drive = 1.9 / kVoigtPeak;
  const auto folds = bistable_folds(drive, m, P);
  REQUIRE(folds.size() == 2);
  CHECK((folds[0] - m.delta_N) / K == doctest::Approx(kFoldLow).epsilon(1e-4));
  CHECK((folds[1] - m.delta_N) / K == doctest::Approx(kFoldHigh).epsilon(1e-4));
  const double inside = 0.5 * (folds[0] + folds[1]);
  const auto up = steady_intracavity(inside, drive, m, P, SweepBranch::sweep_up);
  const auto down = steady_intracavity(inside, drive, m, P, SweepBranch::sweep_down);
  CHECK(up.n_solutions == 3);
  CHECK(down.nbar > 2.0 * up.nbar);
  const auto outside = steady_intracavity(folds[1] + 0.5 * K, drive, m, P, SweepBranch::sweep_up);
  CHECK(outside.n_solutions == 1);
  CHECK(bistable_folds(0.5, m, P).empty());
}

TEST_CASE("Voigt transmission reduces to the Lorentzian without jitter and shift") {
  Eigen::VectorXd nodes = Eigen::VectorXd::Zero(10);
  auto m = collective_mode(AtomicEnsemble::at_positions(nodes), P);
  const auto p = unjittered();
  for (double d = -10.0; d <= 10.0; d += 0.5) {
    const double expected = 1.9 * std::norm(lorentzian_response(d * K, 0.0, K));
    CHECK(std::abs(voigt_transmission(m.delta_N + d * K, 1.9, m, p) - expected) <= 1e-12 * 1.9);
  }
}

TEST_CASE("jitter lowers the peak transmission") {
  Eigen::VectorXd nodes = Eigen::VectorXd::Zero(10);
  const auto m = collective_mode(AtomicEnsemble::at_positions(nodes), P);
  CHECK(voigt_peak_fraction(P) == doctest::Approx(kVoigtPeak).epsilon(1e-10));
  CHECK(voigt_transmission(m.delta_N, 1.9, m, P) == doctest::Approx(1.9 * kVoigtPeak).epsilon(1e-9));
  CHECK(voigt_transmission(m.delta_N, 1.9, m, P) < 1.9);
  CHECK(voigt_peak_fraction(unjittered()) == 1.0);
  PhysicalParams bad = P;
  bad.sigma_jitter = -1.0;
  CHECK_THROWS_AS(voigt_transmission(0.0, 1.0, m, bad), DomainError);
}

TEST_CASE("convolved heating factor") {
  const auto m = mode_at(crossing_atoms());
  // Without jitter the factor is 1 where the shifted detuning equals omega_z.
  const auto p0 = unjittered();
  const double nmax = 1.9;
  double d_peak = m.delta_N + P.omega_z;
  for (int i = 0; i < 60; ++i) {
    d_peak = m.delta_N + P.omega_z - m.shift_per_photon * steady_intracavity(d_peak, nmax, m, p0, SweepBranch::sweep_up).nbar;
  }
  CHECK(convolved_heating_per_photon(d_peak, nmax, m, p0) == doctest::Approx(1.0).epsilon(1e-9));
  // Default jitter at zero probe detuning from the shifted cavity.
  const double f = convolved_heating_per_photon(m.delta_N, nmax, m, P);
  CHECK(f == doctest::Approx(0.7).epsilon(0.05 / 0.7));
}

TEST_CASE("convolved heating factor falls with jitter width") {
  // At zero detuning without the displacement shift, and at the maximum over
  // detuning with it. With the shift, the value at delta = 0 first rises
  // because the unjittered peak sits about one linewidth below.
  auto flat = mode_at(crossing_atoms());
  flat.shift_per_photon = 0.0;
  const auto m = mode_at(crossing_atoms());
  PhysicalParams p = P;
  double previous_flat = 2.0;
  double previous_peak = 2.0;
  for (double s = 0.0; s <= 3.0 + 1e-9; s += 0.25) {
    p.sigma_jitter = s * K;
    const double f = convolved_heating_per_photon(flat.delta_N, 1.9, flat, p);
    CHECK(f < previous_flat);
    previous_flat = f;
    double peak = 0.0;
    for (double d = -3.0; d <= 1.0 + 1e-9; d += 0.05) {
      peak = std::max(peak, convolved_heating_per_photon(m.delta_N + d * K, 1.9, m, p));
    }
    CHECK(peak < previous_peak);
    previous_peak = peak;
  }
}
