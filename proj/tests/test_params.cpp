#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "backaction/csv.hpp"
#include "backaction/errors.hpp"
#include "backaction/params.hpp"

using namespace backaction;

namespace {
// Evaluated independently from CODATA 2018 constants.
constexpr double kCooperativity = 52.36363636363635;
constexpr double kKappaMirrors = 4095103.163402061;  // rad/s
constexpr double kF0 = 1.1067926821449096e-23;       // N
}  // namespace

TEST_CASE("empty document gives the default apparatus") {
  const auto p = load_config("");
  CHECK(p.g0 == doctest::Approx(2.0 * M_PI * 14.4e6).epsilon(1e-15));
  CHECK(p.kappa == doctest::Approx(2.0 * M_PI * 0.66e6).epsilon(1e-15));
  CHECK(p.gamma == doctest::Approx(2.0 * M_PI * 3.0e6).epsilon(1e-15));
  CHECK(p.omega_z == doctest::Approx(2.0 * M_PI * 42e3).epsilon(1e-15));
  CHECK(p.lambda_p == 780e-9);
  CHECK(p.lambda_t == 850e-9);
  CHECK(p.eta_det == 0.04);
  CHECK(p.gamma_bg == 0.9);
  CHECK(p.trap_depth_U == doctest::Approx(6.6e-6 * constants::k_boltzmann).epsilon(1e-15));
  CHECK(p.temperature == doctest::Approx(0.8e-6).epsilon(1e-15));
}

TEST_CASE("frequencies in Hz are converted to rad/s") {
  const auto p = load_config("kappa_hz = 0.66e6\n");
  CHECK(p.kappa == doctest::Approx(4.147e6).epsilon(1e-3));
  CHECK(p.kappa == 2.0 * M_PI * 0.66e6);
}

TEST_CASE("out-of-range detection efficiency is a validation error") {
  CHECK_THROWS_AS(load_config("eta_det = 1.5"), ValidationError);
  CHECK_THROWS_AS(load_config("eta_det = 0"), ValidationError);
  CHECK_NOTHROW(load_config("eta_det = 1"));
}

TEST_CASE("validation lists every violated invariant") {
  try {
    load_config("kappa_hz = -1\ng0_hz = 0\neta_det = 2\n");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.violations().size() >= 3);
  }
}

TEST_CASE("near-resonant atom-cavity detuning is rejected") {
  CHECK_THROWS_AS(load_config("delta_ca_hz = 1e9"), ValidationError);
  CHECK_NOTHROW(load_config("delta_ca_hz = -3e9"));
}

TEST_CASE("parse errors name the offending key") {
  auto key_of = [](const char* text) {
    try {
      load_config(text);
    } catch (const ConfigError& e) {
      return e.key();
    }
    return std::string("<none>");
  };
  CHECK(key_of("kappa_hz = fast") == "kappa_hz");
  CHECK(key_of("unknown_thing = 3") == "unknown_thing");
  CHECK(key_of("g0_hz = 1e7\ng0_hz = 2e7") == "g0_hz");
  CHECK(key_of("just some words").empty());
}

TEST_CASE("comments and blank lines are ignored") {
  const auto p = load_config("# header\n\n  gamma_bg = 1.2   # trailing\n");
  CHECK(p.gamma_bg == 1.2);
}

TEST_CASE("derived quantities at the default apparatus") {
  const auto d = derive(PhysicalParams{});
  CHECK(d.cooperativity_C == doctest::Approx(kCooperativity).epsilon(1e-14));
  CHECK(d.cooperativity_C == doctest::Approx(52.4).epsilon(0.5 / 52.4));
  CHECK(d.kappa_from_mirrors == doctest::Approx(kKappaMirrors).epsilon(1e-12));
  CHECK(std::abs(d.kappa_from_mirrors / PhysicalParams{}.kappa - 1.0) < 0.05);
  CHECK(d.f0 == doctest::Approx(kF0).epsilon(1e-12));
  CHECK(d.k_p == doctest::Approx(2.0 * M_PI / 780e-9).epsilon(1e-15));
  CHECK(d.k_t == doctest::Approx(2.0 * M_PI / 850e-9).epsilon(1e-15));
}

TEST_CASE("cooperativity is quadratic in the coupling and recomputable") {
  PhysicalParams p;
  const double c1 = derive(p).cooperativity_C;
  p.g0 *= 2.0;
  CHECK(derive(p).cooperativity_C == doctest::Approx(4.0 * c1).epsilon(1e-14));
  CHECK(derive(p).cooperativity_C == p.g0 * p.g0 / (2.0 * p.kappa * p.gamma));
}

TEST_CASE("single-photon force flips sign with the atom-cavity detuning") {
  PhysicalParams p;
  const double f = derive(p).f0;
  p.delta_ca = -p.delta_ca;
  CHECK(derive(p).f0 == -f);
}

TEST_CASE("Hz round trip through the export is exact to one ulp") {
  const char* text =
      "g0_hz = 14400000\nkappa_hz = 660000\ngamma_hz = 3000000\nomega_z_hz = 42000\n"
      "delta_ca_hz = 100000000000\nsigma_jitter_hz = 1100000\n";
  auto doc = ConfigDocument::parse(text);
  const auto p = load_config(text);
  for (const auto& e : export_params(p)) {
    if (!doc.contains(e.key)) continue;
    const double in = *doc.number(e.key);
    CHECK(std::abs(e.value - in) <= std::abs(in) * std::numeric_limits<double>::epsilon());
  }
}

TEST_CASE("parameter dump is parseable CSV with key,value,unit") {
  const auto parsed_text = params_to_csv(PhysicalParams{});
  CHECK(parsed_text.rfind("key,value,unit\n", 0) == 0);
  CHECK(parsed_text.find("cooperativity_C,52.36363636363") != std::string::npos);
}
