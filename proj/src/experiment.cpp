#include "backaction/experiment.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>

#include "backaction/csv.hpp"
#include "backaction/errors.hpp"
#include "backaction/numerics.hpp"
#include "backaction/oracle.hpp"

namespace backaction::experiment {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_positive(std::vector<std::string>& out, const char* name, double v) {
  if (!(std::isfinite(v) && v > 0.0)) out.push_back(std::string(name) + " must be finite and > 0");
}

}  // namespace

std::vector<std::string> violations(const ProtocolConfig& c) {
  std::vector<std::string> out;
  require_positive(out, "n_initial", c.n_initial);
  if (!std::isfinite(c.delta_pc)) out.push_back("delta_pc must be finite");
  if (!(std::isfinite(c.nbar_max) && c.nbar_max >= 0.0)) out.push_back("nbar_max must be finite and >= 0");
  require_positive(out, "bin_time", c.bin_time);
  require_positive(out, "window", c.window);
  require_positive(out, "equilibration_tau", c.equilibration_tau);
  require_positive(out, "duration", c.duration);
  if (!(c.window >= c.bin_time)) out.push_back("window must be >= bin_time");
  if (!(c.duration >= c.window)) out.push_back("duration must be >= window");
  if (!(std::isfinite(c.extra_loss) && c.extra_loss >= 0.0)) out.push_back("extra_loss must be finite and >= 0");
  if (c.repetitions < 1) out.push_back("repetitions must be >= 1");
  if (c.hold && !(std::isfinite(c.hold->Delta) && c.hold->nbar >= 0.0)) out.push_back("hold setting invalid");
  return out;
}

void validate(const ProtocolConfig& c) {
  auto v = violations(c);
  if (!v.empty()) throw ValidationError(std::move(v));
}

ProtocolConfig protocol_from(ConfigDocument& doc) {
  ProtocolConfig c;
  if (auto v = doc.number("n_initial")) c.n_initial = *v;
  if (auto v = doc.number("delta_pc_hz")) c.delta_pc = *v * constants::two_pi;
  if (auto v = doc.number("nbar_max")) c.nbar_max = *v;
  if (auto v = doc.number("bin_time_s")) c.bin_time = *v;
  if (auto v = doc.number("window_s")) c.window = *v;
  if (auto v = doc.number("equilibration_tau_s")) c.equilibration_tau = *v;
  if (auto v = doc.number("duration_s")) c.duration = *v;
  if (auto v = doc.unsigned_integer("seed")) c.seed = *v;
  if (auto v = doc.number("extra_loss")) c.extra_loss = *v;
  if (auto v = doc.unsigned_integer("repetitions")) {
    if (*v > std::numeric_limits<std::uint32_t>::max()) throw ConfigError("repetitions", "repetitions out of range");
    c.repetitions = static_cast<std::uint32_t>(*v);
  }
  const auto hold_delta = doc.number("hold_delta_hz");
  const auto hold_nbar = doc.number("hold_nbar");
  if (hold_delta.has_value() != hold_nbar.has_value()) {
    throw ConfigError(hold_delta ? "hold_nbar" : "hold_delta_hz", "hold_delta_hz and hold_nbar must be given together");
  }
  if (hold_delta) c.hold = HoldSetting{*hold_delta * constants::two_pi, *hold_nbar};
  return c;
}

std::vector<std::pair<std::string, std::string>> protocol_metadata(const ProtocolConfig& c) {
  using csv::format_double;
  std::vector<std::pair<std::string, std::string>> out{
      {"n_initial", format_double(c.n_initial)},
      {"delta_pc_hz", format_double(c.delta_pc / constants::two_pi)},
      {"nbar_max", format_double(c.nbar_max)},
      {"bin_time_s", format_double(c.bin_time)},
      {"window_s", format_double(c.window)},
      {"equilibration_tau_s", format_double(c.equilibration_tau)},
      {"duration_s", format_double(c.duration)},
      {"seed", std::to_string(c.seed)},
      {"extra_loss", format_double(c.extra_loss)},
      {"repetitions", std::to_string(c.repetitions)},
  };
  if (c.hold) {
    out.emplace_back("hold_delta_hz", format_double(c.hold->Delta / constants::two_pi));
    out.emplace_back("hold_nbar", format_double(c.hold->nbar));
  }
  return out;
}

double drive_for(double nbar_max, const PhysicalParams& params) { return nbar_max / voigt_peak_fraction(params); }

// ---------------------------------------------------------------------------

LineshapeTable::LineshapeTable(const CollectiveMode& shape, double delta_pc, double drive,
                               const PhysicalParams& params, double max_atoms, int points) {
  if (points < 3 || !(max_atoms > 0.0)) throw DomainError("LineshapeTable: invalid grid");
  atoms_ = Eigen::VectorXd::LinSpaced(points, 0.0, max_atoms);
  nbar_.resize(points);
  heating_.resize(points);
  const double r_fs1 = freespace_heating(1.0, params);
  for (int i = 0; i < points; ++i) {
    const auto mode = rescale(shape, atoms_[i], params);
    const auto avg = jitter_average(delta_pc, drive, mode, params);
    nbar_[i] = avg.nbar;
    heating_[i] = r_fs1 * avg.nbar_times_ratio;
  }
  nbar_.maxCoeff(&peak_);
  peak_atoms_ = atoms_[peak_];
}

namespace {

// Cubic Hermite interpolation on a uniform grid with central-difference slopes;
// value and first derivative are continuous.
struct HermiteCell {
  Eigen::Index i;
  double f;
};

HermiteCell locate(const Eigen::VectorXd& grid, double x) {
  const double step = grid[1] - grid[0];
  const double u = std::clamp(x / step, 0.0, static_cast<double>(grid.size() - 1));
  const auto i = std::min<Eigen::Index>(static_cast<Eigen::Index>(u), grid.size() - 2);
  return {i, u - static_cast<double>(i)};
}

double node_slope(const Eigen::VectorXd& v, Eigen::Index i) {
  if (i == 0) return v[1] - v[0];
  if (i == v.size() - 1) return v[i] - v[i - 1];
  return 0.5 * (v[i + 1] - v[i - 1]);
}

}  // namespace

double LineshapeTable::interpolate(const Eigen::VectorXd& values, double n) const {
  const auto [i, f] = locate(atoms_, n);
  const double m0 = node_slope(values, i);
  const double m1 = node_slope(values, i + 1);
  const double f2 = f * f;
  const double f3 = f2 * f;
  return (2 * f3 - 3 * f2 + 1) * values[i] + (f3 - 2 * f2 + f) * m0 + (-2 * f3 + 3 * f2) * values[i + 1] +
         (f3 - f2) * m1;
}

double LineshapeTable::nbar(double n) const { return interpolate(nbar_, n); }
double LineshapeTable::heating(double n) const { return interpolate(heating_, n); }

double LineshapeTable::nbar_slope(double n) const {
  const auto [i, f] = locate(atoms_, n);
  const double m0 = node_slope(nbar_, i);
  const double m1 = node_slope(nbar_, i + 1);
  const double f2 = f * f;
  const double d = (6 * f2 - 6 * f) * nbar_[i] + (3 * f2 - 4 * f + 1) * m0 + (-6 * f2 + 6 * f) * nbar_[i + 1] +
                   (3 * f2 - 2 * f) * m1;
  return d / (atoms_[1] - atoms_[0]);
}

double LineshapeTable::invert(double target, bool upper) const {
  // nbar is increasing on [0, peak] and decreasing on [peak, end].
  Eigen::Index lo = upper ? peak_ : 0;
  Eigen::Index hi = upper ? atoms_.size() - 1 : peak_;
  if (lo == hi) return atoms_[lo];
  auto above = [&](Eigen::Index i) { return nbar_[i] >= target; };
  const bool lo_above = above(lo);
  if (lo_above == above(hi)) {
    // Out of range on this side: the closest end.
    const bool want_peak = target >= nbar_[peak_];
    return want_peak ? peak_atoms_ : atoms_[upper ? hi : lo];
  }
  while (hi - lo > 1) {
    const Eigen::Index mid = (lo + hi) / 2;
    (above(mid) == lo_above ? lo : hi) = mid;
  }
  const double f = (target - nbar_[lo]) / (nbar_[hi] - nbar_[lo]);
  return atoms_[lo] + f * (atoms_[hi] - atoms_[lo]);
}

// ---------------------------------------------------------------------------

TransmissionTrace forward_simulate(const ProtocolConfig& config, const PhysicalParams& params,
                                   const AtomicEnsemble& ensemble) {
  validate(config);
  auto bad = violations(params);
  std::erase_if(bad, [&](const std::string& s) { return params.eta_det == 0.0 && s.starts_with("eta_det"); });
  if (!bad.empty()) throw ValidationError(std::move(bad));
  if (!(ensemble.n_atoms() > 0.0)) throw DomainError("forward_simulate: ensemble has no atoms");

  const CollectiveMode shape = collective_mode(ensemble, params);
  const double U = params.trap_depth_U;
  const double r_fs1 = freespace_heating(1.0, params);

  std::optional<LineshapeTable> table;
  double hold_heating = 0.0;
  double hold_ratio = 0.0;
  if (config.hold) {
    hold_ratio = 1.0 + backaction_ratio(config.hold->Delta, shape, params);
    hold_heating = freespace_heating(config.hold->nbar, params) * hold_ratio;
  } else {
    table.emplace(shape, config.delta_pc, drive_for(config.nbar_max, params), params, 1.1 * config.n_initial);
  }
  auto photons = [&](double n) { return table ? table->nbar(n) : config.hold->nbar; };
  auto heating = [&](double n) { return table ? table->heating(n) : hold_heating; };

  using State = Eigen::Vector4d;  // N, R_eq, heating_loss, deposited
  auto rhs = [&](const State& y) {
    const double n = std::max(y[0], 0.0);
    const double r = heating(n);
    State d;
    d[0] = -n * (params.gamma_bg + y[1] / U + config.extra_loss);
    d[1] = (r - y[1]) / config.equilibration_tau;
    d[2] = n * y[1] / U;
    d[3] = n * r / U;
    return d;
  };
  const double max_step = 2.5e-5;
  const auto half_steps = static_cast<int>(std::ceil(0.5 * config.bin_time / max_step));
  const double h = 0.5 * config.bin_time / half_steps;
  auto advance = [&](State& y) {
    for (int s = 0; s < half_steps; ++s) {
      const State k1 = rhs(y);
      const State k2 = rhs(y + 0.5 * h * k1);
      const State k3 = rhs(y + 0.5 * h * k2);
      const State k4 = rhs(y + h * k3);
      y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  };

  const auto n_bins = static_cast<Eigen::Index>(std::floor(config.duration / config.bin_time + 1e-9));
  TransmissionTrace tr;
  tr.config = config;
  tr.times.resize(n_bins);
  tr.counts.resize(static_cast<std::size_t>(n_bins));
  tr.true_nbar.resize(n_bins);
  tr.true_N.resize(n_bins);
  tr.heating.resize(n_bins);
  tr.loss_rate.resize(n_bins);
  tr.injected_ratio.resize(n_bins);

  auto rng = oracle::trajectory_rng(config.seed, 0);
  const double count_scale = config.repetitions * params.eta_det * 2.0 * params.kappa * config.bin_time;
  State y(config.n_initial, heating(config.n_initial), 0.0, 0.0);
  for (Eigen::Index k = 0; k < n_bins; ++k) {
    advance(y);
    if (!y.allFinite()) {
      throw NumericError("forward_simulate: non-finite state at t = " + csv::format_double((k + 0.5) * config.bin_time),
                         0.0);
    }
    const double n = y[0];
    const double nbar = photons(n);
    tr.times[k] = (static_cast<double>(k) + 0.5) * config.bin_time;
    tr.true_N[k] = n;
    tr.true_nbar[k] = nbar;
    tr.heating[k] = y[1];
    tr.loss_rate[k] = params.gamma_bg + y[1] / U + config.extra_loss;
    tr.injected_ratio[k] = nbar > 0.0 ? heating(n) / (r_fs1 * nbar) : (config.hold ? hold_ratio : kNaN);
    const double mean = count_scale * nbar;
    std::int64_t c = 0;
    if (mean > 0.0) c = std::poisson_distribution<std::int64_t>(mean)(rng);
    tr.counts[static_cast<std::size_t>(k)] = c;
    advance(y);
  }
  tr.heating_loss = y[2];
  tr.deposited = y[3];
  return tr;
}

std::string trace_to_csv(const TransmissionTrace& tr, std::span<const std::pair<std::string, std::string>> header) {
  std::vector<std::pair<std::string, std::string>> meta(header.begin(), header.end());
  std::set<std::string> seen;
  for (const auto& [k, v] : meta) seen.insert(k);
  for (auto& kv : protocol_metadata(tr.config)) {
    if (!seen.contains(kv.first)) meta.push_back(std::move(kv));
  }
  std::string out = csv::header_block(meta);
  csv::Table table({"t_s", "counts", "true_nbar", "true_N"});
  for (Eigen::Index k = 0; k < tr.times.size(); ++k) {
    table.add_row({tr.times[k], static_cast<double>(tr.counts[static_cast<std::size_t>(k)]), tr.true_nbar[k], tr.true_N[k]});
  }
  return out + table.to_string();
}

TransmissionTrace trace_from_csv(std::string_view text) {
  const auto parsed = csv::parse(text);
  static const std::set<std::string, std::less<>> keys{"n_initial", "delta_pc_hz", "nbar_max", "bin_time_s",
                                                       "window_s", "equilibration_tau_s", "duration_s", "seed",
                                                       "extra_loss", "repetitions", "hold_delta_hz", "hold_nbar"};
  std::map<std::string, std::string> latest;
  for (const auto& [k, v] : parsed.metadata) {
    if (keys.contains(k)) latest[k] = v;
  }
  std::string doc_text;
  for (const auto& [k, v] : latest) doc_text += k + "=" + v + "\n";
  auto doc = ConfigDocument::parse(doc_text);

  TransmissionTrace tr;
  tr.config = protocol_from(doc);
  const auto it = parsed.column_index("t_s");
  const auto ic = parsed.column_index("counts");
  const auto in = parsed.column_index("true_nbar");
  const auto iN = parsed.column_index("true_N");
  const auto n = static_cast<Eigen::Index>(parsed.rows.size());
  tr.times.resize(n);
  tr.true_nbar.resize(n);
  tr.true_N.resize(n);
  tr.counts.resize(parsed.rows.size());
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& row = parsed.rows[static_cast<std::size_t>(k)];
    const double c = row[ic];
    if (!(c >= 0.0) || c != std::floor(c)) throw ConfigError("counts", "trace: counts must be non-negative integers");
    tr.times[k] = row[it];
    tr.counts[static_cast<std::size_t>(k)] = static_cast<std::int64_t>(c);
    tr.true_nbar[k] = row[in];
    tr.true_N[k] = row[iN];
  }
  return tr;
}

// ---------------------------------------------------------------------------

namespace {

struct WindowFit {
  Eigen::Vector2d theta = Eigen::Vector2d::Zero();  // ln N_c, Gamma
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();
  double loglik = -std::numeric_limits<double>::infinity();
  double mean_nbar = 0.0;
  bool converged = false;
};

// ln N(t) = u - Gamma dt about the window centre.
Eigen::Vector2d basis(double dt) { return {1.0, -dt}; }

// Poisson maximum likelihood by Fisher scoring with step halving.
WindowFit fit_window(const LineshapeTable& table, const Eigen::VectorXd& dt, const Eigen::VectorXd& k,
                     double count_scale, const Eigen::Vector2d& start, bool upper) {
  const double log_max = std::log(table.max_atoms());
  const double log_peak = std::log(table.peak_atoms());
  auto log_n = [&](const Eigen::Vector2d& th, Eigen::Index i) { return basis(dt[i]).dot(th); };
  auto in_range = [&](const Eigen::Vector2d& th) {
    // The window centre stays on the selected side of the transmission peak.
    if (upper ? th[0] < log_peak : th[0] > log_peak) return false;
    for (Eigen::Index i = 0; i < dt.size(); ++i) {
      const double l = log_n(th, i);
      if (!(l < log_max && l > -30.0)) return false;
    }
    return true;
  };
  auto loglik = [&](const Eigen::Vector2d& th) {
    double l = 0.0;
    for (Eigen::Index i = 0; i < dt.size(); ++i) {
      const double mu = count_scale * table.nbar(std::exp(log_n(th, i)));
      // Relative to the saturated model, so large counts keep full precision.
      l += (k[i] > 0.0 ? k[i] * std::log(mu / k[i]) + k[i] : 0.0) - mu;
    }
    return l;
  };
  auto information = [&](const Eigen::Vector2d& th, Eigen::Vector2d* score, double* mean) {
    Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
    if (score) score->setZero();
    if (mean) *mean = 0.0;
    for (Eigen::Index i = 0; i < dt.size(); ++i) {
      const double n = std::exp(log_n(th, i));
      const double mu = count_scale * table.nbar(n);
      const Eigen::Vector2d grad = count_scale * table.nbar_slope(n) * n * basis(dt[i]);
      info += grad * grad.transpose() / mu;
      if (score) *score += (k[i] / mu - 1.0) * grad;
      if (mean) *mean += mu;
    }
    return info;
  };

  WindowFit fit;
  Eigen::Vector2d th = start;
  if (!in_range(th)) th[1] = 0.0;
  if (!in_range(th)) th[0] = upper ? 0.5 * (log_peak + log_max) : log_peak - 0.5;
  double l = loglik(th);
  for (int iter = 0; iter < 200; ++iter) {
    Eigen::Vector2d score;
    const Eigen::Matrix2d info = information(th, &score, nullptr);
    Eigen::LDLT<Eigen::Matrix2d> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
    const Eigen::Vector2d step = ldlt.solve(score);
    double scale = 1.0;
    bool improved = false;
    for (int h = 0; h < 50; ++h, scale *= 0.5) {
      const Eigen::Vector2d next = th + scale * step;
      if (!in_range(next)) continue;
      const double ln = loglik(next);
      if (ln >= l) {
        th = next;
        l = ln;
        improved = true;
        break;
      }
    }
    // Converged when the Newton decrement (about twice the attainable gain in
    // log-likelihood) is far below the statistical scale of 1/2.
    const double decrement = score.dot(step);
    if (decrement < 1e-8) {
      fit.converged = true;
      break;
    }
    if (!improved) {
      fit.converged = decrement < 0.1;
      break;
    }
  }
  fit.theta = th;
  fit.loglik = l;
  double mean = 0.0;
  const Eigen::Matrix2d info = information(th, nullptr, &mean);
  fit.mean_nbar = mean / (count_scale * static_cast<double>(dt.size()));
  Eigen::FullPivLU<Eigen::Matrix2d> lu(info);
  if (lu.isInvertible()) {
    fit.covariance = lu.inverse();
  } else {
    fit.covariance.setConstant(std::numeric_limits<double>::infinity());
    fit.converged = false;
  }
  return fit;
}

}  // namespace

HeatingAnalysis analyze_trace(const TransmissionTrace& trace, const PhysicalParams& params,
                              const AtomicEnsemble& ensemble) {
  const auto& c = trace.config;
  validate(c);
  if (c.hold) throw DomainError("analyze_trace: a held-detuning trace carries no lineshape information");
  const auto n_bins = trace.times.size();
  const auto W = static_cast<Eigen::Index>(std::llround(c.window / c.bin_time));
  if (n_bins < W || W < 2) throw DomainError("analyze_trace: trace shorter than one analysis window");
  const Eigen::Index stride = std::max<Eigen::Index>(1, W / 4);

  const CollectiveMode shape = collective_mode(ensemble, params);
  const LineshapeTable table(shape, c.delta_pc, drive_for(c.nbar_max, params), params, 1.1 * c.n_initial);
  const double count_scale = c.repetitions * params.eta_det * 2.0 * params.kappa * c.bin_time;

  Eigen::VectorXd counts(n_bins);
  for (Eigen::Index i = 0; i < n_bins; ++i) counts[i] = static_cast<double>(trace.counts[static_cast<std::size_t>(i)]);

  // Time of the transmission maximum from window-summed counts.
  Eigen::Index best = 0;
  double best_sum = -1.0;
  for (Eigen::Index i0 = 0; i0 + W <= n_bins; ++i0) {
    const double s = counts.segment(i0, W).sum();
    if (s > best_sum) {
      best_sum = s;
      best = i0;
    }
  }
  const double t_peak = trace.times.segment(best, W).mean();

  HeatingAnalysis out;
  const double U = params.trap_depth_U;
  for (Eigen::Index i0 = 0; i0 + W <= n_bins; i0 += stride) {
    HeatingRecord rec;
    const Eigen::VectorXd t = trace.times.segment(i0, W);
    const Eigen::VectorXd k = counts.segment(i0, W);
    rec.t = t.mean();
    const double total = k.sum();
    if (total == 0.0 || count_scale == 0.0) {
      rec.status = WindowStatus::below_detection;
      rec.delta_N = rec.delta = rec.N = rec.N_err = rec.dNdt = rec.nbar = rec.R = rec.ratio = rec.ratio_err = kNaN;
      out.records.push_back(rec);
      continue;
    }
    const Eigen::VectorXd dt = t.array() - rec.t;

    auto start = [&](bool upper) {
      const double n0 = table.invert(total / (count_scale * W), upper);
      const Eigen::Index h = W / 2;
      const double n1 = table.invert(k.head(h).sum() / (count_scale * h), upper);
      const double n2 = table.invert(k.tail(W - h).sum() / (count_scale * (W - h)), upper);
      double g = std::log(n1 / n2) / (t.tail(W - h).mean() - t.head(h).mean());
      if (!(std::isfinite(g) && g > 0.0)) g = 2.0 * params.gamma_bg;
      return fit_window(table, dt, k, count_scale, Eigen::Vector2d(std::log(std::max(n0, 1.0)), g), upper);
    };
    // Branch from the sweep direction: atoms above the peak value before the
    // transmission maximum. Near the maximum both branches are tried.
    const bool upper = rec.t < t_peak;
    WindowFit fit = start(upper);
    bool ambiguous = false;
    if (std::abs(rec.t - t_peak) < c.window) {
      const WindowFit other = start(!upper);
      const bool fit_ok = fit.converged && fit.theta[1] > 0.0;
      const bool other_ok = other.converged && other.theta[1] > 0.0;
      ambiguous = fit_ok && other_ok && std::abs(other.loglik - fit.loglik) < 0.5;
      if (other_ok && (!fit_ok || other.loglik > fit.loglik)) fit = other;
    }
    const double gamma = fit.theta[1];
    rec.N = std::exp(fit.theta[0]);
    rec.N_err = rec.N * std::sqrt(fit.covariance(0, 0));
    rec.delta_N = shape.delta_N * rec.N / shape.n_atoms;
    rec.delta = c.delta_pc - rec.delta_N;
    rec.dNdt = -gamma * rec.N;
    rec.nbar = fit.mean_nbar;
    rec.R = U * (gamma - params.gamma_bg);
    const double r_fs = freespace_heating(rec.nbar, params);
    rec.ratio = rec.R / r_fs;
    const double sigma_gamma = std::sqrt(fit.covariance(1, 1));
    rec.ratio_err = std::hypot(U * sigma_gamma / r_fs, rec.ratio / std::sqrt(total));
    rec.status = !fit.converged ? WindowStatus::not_converged
                 : ambiguous        ? WindowStatus::ambiguous
                                    : WindowStatus::ok;
    out.records.push_back(rec);
  }
  return out;
}

PeakEstimate recovered_peak(const HeatingAnalysis& analysis, std::size_t span, double max_relative_error) {
  if (span == 0) throw ConfigError("span", "recovered_peak: span must be >= 1");
  std::vector<const HeatingRecord*> ok;
  for (const auto& r : analysis.records) {
    if (r.status == WindowStatus::ok && r.ratio_err > 0.0) ok.push_back(&r);
  }
  PeakEstimate best{kNaN, kNaN, kNaN};
  for (std::size_t i = 0; i + span <= ok.size(); ++i) {
    double w_sum = 0.0;
    double wx_sum = 0.0;
    for (std::size_t j = i; j < i + span; ++j) {
      const double w = 1.0 / (ok[j]->ratio_err * ok[j]->ratio_err);
      w_sum += w;
      wx_sum += w * ok[j]->ratio;
    }
    const double mean = wx_sum / w_sum;
    const double err = 1.0 / std::sqrt(w_sum);
    if (!(err <= max_relative_error * mean)) continue;
    if (!(mean <= best.ratio)) best = {mean, err, 0.5 * (ok[i]->t + ok[i + span - 1]->t)};
  }
  return best;
}

std::string analysis_to_csv(const HeatingAnalysis& a, std::span<const std::pair<std::string, std::string>> header) {
  csv::Table table({"t_s", "delta_rad_s", "N", "dNdt", "R_W", "ratio", "ratio_err"});
  for (const auto& r : a.records) table.add_row({r.t, r.delta, r.N, r.dNdt, r.R, r.ratio, r.ratio_err});
  return csv::header_block(header) + table.to_string();
}

// ---------------------------------------------------------------------------

std::vector<HeatingCurvePoint> heating_curve(const PhysicalParams& params, const CollectiveMode& mode, double sigma,
                                             std::span<const double> delta_grid, double nbar_max) {
  if (!(sigma >= 0.0)) throw DomainError("heating_curve: sigma must be >= 0");
  if (!(nbar_max > 0.0)) throw DomainError("heating_curve: nbar_max must be > 0");
  PhysicalParams p = params;
  p.sigma_jitter = sigma;
  std::vector<HeatingCurvePoint> out;
  out.reserve(delta_grid.size());
  for (double delta : delta_grid) {
    const auto avg = jitter_average(mode.delta_N + delta, nbar_max, mode, p);
    HeatingCurvePoint pt;
    pt.delta = delta;
    pt.nbar = avg.nbar;
    pt.ratio = avg.nbar_times_ratio / avg.nbar;
    pt.r_fs = freespace_heating(avg.nbar, p);
    pt.r_c = pt.r_fs * (pt.ratio - 1.0);
    out.push_back(pt);
  }
  return out;
}

PhysicalParams control_params(PhysicalParams base) {
  base.delta_ca = constants::two_pi * 29.6e9;
  return base;
}

OffResonanceResult offresonance_control(const PhysicalParams& params, const OffResonanceSetup& s) {
  OffResonanceResult out;
  const auto ensemble = AtomicEnsemble::uniform(s.n_atoms);
  out.theory = 1.0 + backaction_ratio(s.Delta, collective_mode(ensemble, params), params);
  if (!(s.duration >= 2.0 * s.bin_time)) {
    out.ratio = kNaN;
    out.insufficient_data = true;
    return out;
  }
  ProtocolConfig c;
  c.n_initial = s.n_atoms;
  c.hold = HoldSetting{s.Delta, s.nbar};
  c.duration = s.duration;
  c.bin_time = s.bin_time;
  c.window = s.duration;
  c.seed = s.seed;
  c.extra_loss = s.extra_loss;
  const auto tr = forward_simulate(c, params, ensemble);
  const Eigen::VectorXd log_n = tr.true_N.array().log();
  const auto fit = numerics::ordinary_least_squares(numerics::polynomial_design(tr.times, 1), log_n);
  const double gamma = -fit.coefficients[1];
  out.ratio = params.trap_depth_U * (gamma - params.gamma_bg) / freespace_heating(s.nbar, params);
  return out;
}

double extra_loss_for_ratio(double target_ratio, const PhysicalParams& params, const OffResonanceSetup& s) {
  const auto mode = collective_mode(AtomicEnsemble::uniform(s.n_atoms), params);
  const double theory = 1.0 + backaction_ratio(s.Delta, mode, params);
  return (target_ratio - theory) * freespace_heating(s.nbar, params) / params.trap_depth_U;
}

TechnicalNoiseFit technical_noise_scan(const PhysicalParams& params, const CollectiveMode& mode,
                                       std::span<const double> nbar_list, double technical_rin, double Delta,
                                       std::uint64_t seed, double relative_noise, double nbar_ref) {
  if (nbar_list.size() < 3) throw ConfigError("nbar_list", "technical_noise_scan: need at least 3 photon numbers");
  const auto [lo, hi] = std::minmax_element(nbar_list.begin(), nbar_list.end());
  if (!(*lo > 0.0) || !(*hi >= 10.0 * *lo)) {
    throw ConfigError("nbar_list", "technical_noise_scan: photon numbers must be positive and span a decade");
  }
  if (!(technical_rin >= 0.0) || !(relative_noise > 0.0)) throw DomainError("technical_noise_scan: invalid noise level");

  TechnicalNoiseFit out;
  const double r_c1 = backaction_heating(1.0, Delta, mode, params);
  out.linear_true = freespace_heating(1.0, params) + r_c1;
  out.quadratic_true = technical_rin * r_c1;
  out.nbar_ref = nbar_ref;

  const auto n = static_cast<Eigen::Index>(nbar_list.size());
  Eigen::MatrixXd design(n, 2);
  Eigen::VectorXd y(n), sigma(n);
  auto rng = oracle::trajectory_rng(seed, 0);
  std::normal_distribution<double> gauss;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double nb = nbar_list[static_cast<std::size_t>(i)];
    const double model = out.linear_true * nb + out.quadratic_true * nb * nb;
    design(i, 0) = nb;
    design(i, 1) = nb * nb;
    sigma[i] = relative_noise * model;
    y[i] = model + sigma[i] * gauss(rng);
  }
  const auto fit = numerics::weighted_least_squares(design, y, sigma);
  out.linear = fit.coefficients[0];
  out.quadratic = fit.coefficients[1];
  out.linear_err = fit.stderr_of(0);
  out.quadratic_err = fit.stderr_of(1);
  const double a = out.linear;
  const double b = out.quadratic;
  const double denom = a + b * nbar_ref;
  out.fraction = b * nbar_ref / denom;
  const Eigen::Vector2d grad(-b * nbar_ref / (denom * denom), a * nbar_ref / (denom * denom));
  out.fraction_err = std::sqrt(grad.dot(fit.covariance * grad));
  return out;
}

double rin_for_fraction(double fraction, double nbar_ref, double Delta, const CollectiveMode& mode,
                        const PhysicalParams& params) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw DomainError("rin_for_fraction: fraction must lie in [0, 1)");
  const double r_c1 = backaction_heating(1.0, Delta, mode, params);
  if (!(r_c1 > 0.0)) throw DomainError("rin_for_fraction: no backaction heating to scale");
  const double a = freespace_heating(1.0, params) + r_c1;
  return fraction * a / ((1.0 - fraction) * nbar_ref * r_c1);
}

}  // namespace backaction::experiment
