// Command-line driver: runs one operation from a config file and writes CSV
// artifacts plus a manifest.csv provenance file into the output directory.

#include <CLI11.hpp>

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "backaction/collective.hpp"
#include "backaction/csv.hpp"
#include "backaction/errors.hpp"
#include "backaction/experiment.hpp"
#include "backaction/oracle.hpp"
#include "backaction/params.hpp"
#include "backaction/spectra.hpp"

namespace {

using namespace backaction;
using Metadata = std::vector<std::pair<std::string, std::string>>;

constexpr const char* kVersion = BACKACTION_VERSION;

struct SpectrumSettings {
  double nbar = 1.0;
  std::optional<double> Delta;  // rad/s, default omega_z
  int points = 401;
  double span_kappa = 10.0;
};

struct CurveSettings {
  int points = 201;
  double span_kappa = 10.0;
};

struct OracleSettings {
  std::size_t n_trajectories = 1000;
};

struct RunConfig {
  PhysicalParams params;
  experiment::ProtocolConfig protocol;
  std::optional<std::string> ensemble_csv;
  AtomicEnsemble ensemble = AtomicEnsemble::uniform(1.0e5);
  SpectrumSettings spectrum;
  CurveSettings curve;
  OracleSettings oracle;
};

int positive_int(ConfigDocument& doc, std::string_view key, int fallback) {
  const auto v = doc.unsigned_integer(key);
  if (!v) return fallback;
  if (*v < 2 || *v > 1000000) throw ConfigError(std::string(key), std::string(key) + " must lie in [2, 1e6]");
  return static_cast<int>(*v);
}

RunConfig load(const std::optional<std::string>& path) {
  auto doc = ConfigDocument::parse(path ? csv::read_file(*path) : std::string());
  RunConfig rc;
  rc.params = params_from(doc);
  rc.protocol = experiment::protocol_from(doc);
  rc.ensemble_csv = doc.text("ensemble_csv");
  if (auto v = doc.number("spectrum_nbar")) rc.spectrum.nbar = *v;
  if (auto v = doc.number("spectrum_delta_hz")) rc.spectrum.Delta = *v * constants::two_pi;
  rc.spectrum.points = positive_int(doc, "spectrum_points", rc.spectrum.points);
  if (auto v = doc.number("spectrum_span_kappa")) rc.spectrum.span_kappa = *v;
  rc.curve.points = positive_int(doc, "curve_points", rc.curve.points);
  if (auto v = doc.number("curve_span_kappa")) rc.curve.span_kappa = *v;
  if (auto v = doc.unsigned_integer("n_trajectories")) rc.oracle.n_trajectories = *v;
  doc.require_all_consumed();

  validate(rc.params);
  experiment::validate(rc.protocol);
  if (!(rc.spectrum.nbar >= 0.0)) throw ConfigError("spectrum_nbar", "spectrum_nbar must be >= 0");
  if (!(rc.spectrum.span_kappa > 0.0)) throw ConfigError("spectrum_span_kappa", "spectrum_span_kappa must be > 0");
  if (!(rc.curve.span_kappa > 0.0)) throw ConfigError("curve_span_kappa", "curve_span_kappa must be > 0");
  if (rc.oracle.n_trajectories < 2) throw ConfigError("n_trajectories", "n_trajectories must be >= 2");

  if (rc.ensemble_csv) {
    std::filesystem::path p(*rc.ensemble_csv);
    if (p.is_relative() && path) p = std::filesystem::path(*path).parent_path() / p;
    rc.ensemble = AtomicEnsemble::from_csv(csv::read_file(p.string()));
  } else {
    rc.ensemble = AtomicEnsemble::uniform(rc.protocol.n_initial);
  }
  validate(rc.ensemble, rc.params);
  return rc;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Context {
  std::string command;
  std::optional<std::string> config_path;
  std::filesystem::path out_dir;
  unsigned threads = 1;
  RunConfig rc;
  std::vector<std::string> outputs;

  std::uint64_t seed() const { return rc.protocol.seed; }

  Metadata header() const {
    return {{"command", command},
            {"seed", std::to_string(seed())},
            {"version", kVersion},
            {"timestamp", utc_timestamp()}};
  }

  void write(const std::string& name, const std::string& contents) {
    csv::write_file((out_dir / name).string(), contents);
    outputs.push_back(name);
  }
};

// Rows of text cells; values are already formatted.
std::string text_table(const std::vector<std::string>& columns, const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(columns);
  for (const auto& r : rows) line(r);
  return out.str();
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_params(Context& ctx) {
  ctx.write("params.csv", csv::header_block(ctx.header()) + params_to_csv(ctx.rc.params));
  const auto d = derive(ctx.rc.params);
  std::cout << "C = " << csv::format_double(d.cooperativity_C) << '\n';
  return 0;
}

int cmd_spectrum(Context& ctx) {
  const auto& p = ctx.rc.params;
  const auto& s = ctx.rc.spectrum;
  const double Delta = s.Delta.value_or(p.omega_z);
  const Eigen::ArrayXd grid = Eigen::ArrayXd::LinSpaced(s.points, -s.span_kappa * p.kappa, s.span_kappa * p.kappa);
  const auto spectrum = analytic_spectrum(grid, s.nbar, Delta, p.kappa);
  csv::Table table({"omega_rad_s", "S_nn_s", "S_sym_s"});
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    table.add_row({grid[i], spectrum.values[i], symmetrized_noise_spectrum(grid[i], s.nbar, Delta, p.kappa)});
  }
  auto meta = ctx.header();
  meta.emplace_back("nbar", csv::format_double(s.nbar));
  meta.emplace_back("Delta_rad_s", csv::format_double(Delta));
  ctx.write("spectrum.csv", csv::header_block(meta) + table.to_string());
  return 0;
}

int cmd_heating_curve(Context& ctx) {
  const auto& p = ctx.rc.params;
  const auto& c = ctx.rc.curve;
  // Ensemble shape scaled to the atom number at which the probe meets the
  // resonance, driven as in the forward simulation.
  const auto& proto = ctx.rc.protocol;
  const auto shape = collective_mode(ctx.rc.ensemble, p);
  const auto mode = rescale(shape, shape.n_atoms * proto.delta_pc / shape.delta_N, p);
  const Eigen::ArrayXd grid =
      Eigen::ArrayXd::LinSpaced(c.points, p.omega_z - c.span_kappa * p.kappa, p.omega_z + c.span_kappa * p.kappa);
  const auto curve = experiment::heating_curve(p, mode, p.sigma_jitter, std::span<const double>(grid.data(), grid.size()),
                                               experiment::drive_for(proto.nbar_max, p));
  csv::Table table({"delta_rad_s", "nbar", "r_c_W", "r_fs_W", "ratio"});
  double peak = 0.0;
  for (const auto& pt : curve) {
    table.add_row({pt.delta, pt.nbar, pt.r_c, pt.r_fs, pt.ratio});
    peak = std::max(peak, pt.ratio);
  }
  auto meta = ctx.header();
  meta.emplace_back("n_atoms", csv::format_double(mode.n_atoms));
  meta.emplace_back("peak_ratio", csv::format_double(peak));
  ctx.write("heating_curve.csv", csv::header_block(meta) + table.to_string());
  std::cout << "peak R/R_fs = " << csv::format_double(peak) << '\n';
  return 0;
}

int cmd_simulate(Context& ctx) {
  const auto trace = experiment::forward_simulate(ctx.rc.protocol, ctx.rc.params, ctx.rc.ensemble);
  ctx.write("trace.csv", experiment::trace_to_csv(trace, ctx.header()));
  return 0;
}

int cmd_analyze(Context& ctx, const std::string& trace_path) {
  const auto trace = experiment::trace_from_csv(csv::read_file(trace_path));
  ctx.rc.protocol = trace.config;  // the trace header is the resolved protocol
  const auto ensemble = ctx.rc.ensemble_csv ? ctx.rc.ensemble : AtomicEnsemble::uniform(trace.config.n_initial);
  const auto analysis = experiment::analyze_trace(trace, ctx.rc.params, ensemble);
  const auto peak = experiment::recovered_peak(analysis);
  Metadata meta = ctx.header();
  meta.emplace_back("trace", std::filesystem::path(trace_path).filename().string());
  meta.emplace_back("recovered_peak_ratio", csv::format_double(peak.ratio));
  meta.emplace_back("recovered_peak_err", csv::format_double(peak.std_error));
  meta.emplace_back("recovered_peak_t_s", csv::format_double(peak.t));
  ctx.write("analysis.csv", experiment::analysis_to_csv(analysis, meta));
  std::cout << "recovered peak R/R_fs = " << csv::format_double(peak.ratio) << " +- "
            << csv::format_double(peak.std_error) << '\n';
  return 0;
}

struct SuiteResult {
  std::string suite;
  std::string metric;
  double value;
  double tolerance;
  bool pass;
};

std::vector<SuiteResult> run_oracle_suites(const RunConfig& rc, std::uint64_t seed, unsigned threads) {
  const auto& p = rc.params;
  const double k = p.kappa;
  std::vector<SuiteResult> out;

  {
    const double s = photon_noise_spectrum(-p.omega_z, 1.0, p.omega_z, k);
    const double rel = std::abs(s * k / 2.0 - 1.0);
    out.push_back({"spectrum_peak", "rel_error_vs_2_over_kappa", rel, 1e-3, rel <= 1e-3});
  }
  {
    const Eigen::ArrayXd grid = Eigen::ArrayXd::LinSpaced(201, -10.0 * k, 10.0 * k);
    const auto ft = oracle::spectrum_ft_check(1.0, p.omega_z, k, grid);
    out.push_back({"spectrum_ft", "max_rel_error", ft.max_relative_error, 1e-3, ft.max_relative_error <= 1e-3});
  }
  {
    const Eigen::ArrayXd grid = Eigen::ArrayXd::LinSpaced(10000, -1e6 * k, 1e6 * k);
    const double dev = (oracle::output_whiteness_kernel(grid, 0.0, k) - 1.0).abs().maxCoeff();
    out.push_back({"output_whiteness", "max_abs_deviation", dev, 1e-9, dev <= 1e-9});
  }
  {
    oracle::TrajectoryConfig tc{seed, rc.oracle.n_trajectories, 0.05 / k, 2048 * 0.05 / k};
    const double nbar = 1.0;
    const auto est =
        oracle::noise_periodogram(tc, nbar, p.omega_z, k, oracle::NoiseProcess::real_fluctuation, 5.0 * k, 4, threads);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < est.grid.size(); ++i) {
      const double ref = symmetrized_noise_spectrum(est.grid[i], nbar, p.omega_z, k);
      sum += std::pow(est.values[i] / ref - 1.0, 2);
    }
    const double rms = std::sqrt(sum / static_cast<double>(est.grid.size()));
    out.push_back({"periodogram", "rms_rel_deviation", rms, 0.05, rms <= 0.05});
  }
  {
    oracle::TrajectoryConfig tc{seed, rc.oracle.n_trajectories, 0.05 / k, 2048 * 0.05 / k};
    const double tau = 1.0 / k;
    const auto ac = oracle::sample_autocorrelation(tc, 1.0, p.omega_z, k, tau, threads);
    const auto expected = two_time_correlation(tau, 1.0, p.omega_z, k);
    const double sigma = std::hypot(ac.real.std_error, ac.imag.std_error);
    const double pull = std::abs(ac.value() - expected) / sigma;
    out.push_back({"autocorrelation", "pull", pull, 4.0, pull <= 4.0});
  }
  {
    const auto mode = collective_mode(rc.ensemble, p);
    const double nbar = 1.9;
    const auto tc = oracle::default_trajectory_config(p, rc.oracle.n_trajectories, 0.5e-3, seed);
    const auto est = oracle::kicked_oscillator_heating(tc, nbar, p.omega_z, mode, p, threads);
    const double prediction = oracle::classical_heating_prediction(nbar, p.omega_z, mode, p);
    const double rel = std::abs(est.mean / prediction - 1.0);
    const bool pass = rel <= 0.10 && std::abs(est.mean - prediction) <= 3.0 * est.std_error;
    out.push_back({"kicked_oscillator", "rel_deviation", rel, 0.10, pass});
  }
  {
    const auto mode = collective_mode(AtomicEnsemble::uniform(atoms_from_shift(rc.protocol.delta_pc, p)), p);
    oracle::MeanFieldOptions opt;
    opt.quality_factor = 1.0;
    // Drive strengths with and without a multivalued lineshape.
    for (const auto& [name, nbar_max] : {std::pair{"bistability_bistable", 3.85}, std::pair{"bistability_monostable", 0.5}}) {
      const auto sw = oracle::bistability_sweep(nbar_max, mode.delta_N - 12.0 * k, mode.delta_N + 4.0 * k, 161, 0.05,
                                                mode, p, opt);
      const auto off = std::max(std::abs(sw.ode_switch_up - sw.steady_switch_up),
                                std::abs(sw.ode_switch_down - sw.steady_switch_down));
      const bool pass = sw.hysteresis == sw.multivalued && (!sw.multivalued || off <= 1);
      out.push_back({name, "switch_index_offset", static_cast<double>(off),
                     1.0, pass});
    }
  }
  return out;
}

int cmd_oracle(Context& ctx) {
  const auto results = run_oracle_suites(ctx.rc, ctx.seed(), ctx.threads);
  std::vector<std::vector<std::string>> rows;
  bool all = true;
  for (const auto& r : results) {
    rows.push_back({r.suite, r.metric, csv::format_double(r.value), csv::format_double(r.tolerance), r.pass ? "1" : "0"});
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.suite << ' ' << r.metric << '=' << csv::format_double(r.value)
              << '\n';
    all = all && r.pass;
  }
  ctx.write("oracle.csv", csv::header_block(ctx.header()) +
                              text_table({"suite", "metric", "value", "tolerance", "pass"}, rows));
  return all ? 0 : 2;
}

void write_manifest(Context& ctx) {
  std::vector<std::vector<std::string>> rows{
      {"command", ctx.command},
      {"config_path", ctx.config_path.value_or("")},
      {"output_dir", ctx.out_dir.string()},
      {"seed", std::to_string(ctx.seed())},
      {"version", kVersion},
  };
  for (const auto& e : export_params(ctx.rc.params)) rows.push_back({e.key, csv::format_double(e.value)});
  for (const auto& [k, v] : experiment::protocol_metadata(ctx.rc.protocol)) {
    if (k != "seed") rows.push_back({k, v});
  }
  const auto& rc = ctx.rc;
  rows.push_back({"ensemble_csv", rc.ensemble_csv.value_or("")});
  rows.push_back({"spectrum_nbar", csv::format_double(rc.spectrum.nbar)});
  rows.push_back({"spectrum_delta_hz", csv::format_double(rc.spectrum.Delta.value_or(rc.params.omega_z) / constants::two_pi)});
  rows.push_back({"spectrum_points", std::to_string(rc.spectrum.points)});
  rows.push_back({"spectrum_span_kappa", csv::format_double(rc.spectrum.span_kappa)});
  rows.push_back({"curve_points", std::to_string(rc.curve.points)});
  rows.push_back({"curve_span_kappa", csv::format_double(rc.curve.span_kappa)});
  rows.push_back({"n_trajectories", std::to_string(rc.oracle.n_trajectories)});
  for (const auto& f : ctx.outputs) rows.push_back({"output", f});
  csv::write_file((ctx.out_dir / "manifest.csv").string(),
                  csv::header_block(ctx.header()) + text_table({"key", "value"}, rows));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collective-backaction heating: theory, oracles and the bolometric measurement pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string format = "csv";
  std::string trace_path;

  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "override the configured seed");
  app.add_option("--threads", threads, "worker threads for trajectory ensembles")
      ->envname("BACKACTION_SIM_THREADS")
      ->check(CLI::Range(1u, 1024u));
  app.add_option("--format", format, "output format")->check(CLI::IsMember({"csv"}));

  app.add_subcommand("params", "dump physical and derived parameters");
  app.add_subcommand("spectrum", "analytic photon-number noise spectrum");
  app.add_subcommand("heating-curve", "jitter-convolved R/R_fs against probe detuning");
  app.add_subcommand("simulate", "forward-simulate a transmission trace");
  app.add_subcommand("analyze", "infer heating rates from a trace")
      ->add_option("--trace", trace_path, "trace CSV written by simulate")
      ->required();
  app.add_subcommand("oracle", "run the numerical cross-check suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  Context ctx;
  ctx.command = app.get_subcommands().front()->get_name();
  ctx.config_path = config_path;
  ctx.out_dir = out_dir;
  ctx.threads = threads;

  try {
    ctx.rc = load(config_path);
    if (seed) ctx.rc.protocol.seed = *seed;
    std::filesystem::create_directories(ctx.out_dir);

    int status = 0;
    if (ctx.command == "params") status = cmd_params(ctx);
    else if (ctx.command == "spectrum") status = cmd_spectrum(ctx);
    else if (ctx.command == "heating-curve") status = cmd_heating_curve(ctx);
    else if (ctx.command == "simulate") status = cmd_simulate(ctx);
    else if (ctx.command == "analyze") status = cmd_analyze(ctx, trace_path);
    else status = cmd_oracle(ctx);
    write_manifest(ctx);
    return status;
  } catch (const ConfigError& e) {
    std::cerr << "config error" << (e.key().empty() ? "" : " [" + e.key() + "]") << ": " << e.what() << '\n';
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const DomainError& e) {
    std::cerr << "domain error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << " (residual " << e.residual() << ")\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "filesystem error: " << e.what() << '\n';
    return 1;
  }
}
