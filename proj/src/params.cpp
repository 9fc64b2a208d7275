#include "backaction/params.hpp"

#include <charconv>
#include <cmath>
#include <string>

#include "backaction/csv.hpp"
#include "backaction/errors.hpp"

namespace backaction {

namespace {

struct KeySpec {
  const char* key;
  double PhysicalParams::*field;
  double scale;  // internal = config value * scale
  const char* unit;
};

constexpr double micro_kelvin_energy = 1e-6 * constants::k_boltzmann;

const KeySpec kKeys[] = {
    {"g0_hz", &PhysicalParams::g0, constants::two_pi, "Hz"},
    {"kappa_hz", &PhysicalParams::kappa, constants::two_pi, "Hz"},
    {"gamma_hz", &PhysicalParams::gamma, constants::two_pi, "Hz"},
    {"omega_z_hz", &PhysicalParams::omega_z, constants::two_pi, "Hz"},
    {"delta_ca_hz", &PhysicalParams::delta_ca, constants::two_pi, "Hz"},
    {"lambda_p_m", &PhysicalParams::lambda_p, 1.0, "m"},
    {"lambda_t_m", &PhysicalParams::lambda_t, 1.0, "m"},
    {"mass_kg", &PhysicalParams::mass, 1.0, "kg"},
    {"trap_depth_uk", &PhysicalParams::trap_depth_U, micro_kelvin_energy, "uK"},
    {"temperature_uk", &PhysicalParams::temperature, 1e-6, "uK"},
    {"eta_det", &PhysicalParams::eta_det, 1.0, "1"},
    {"sigma_jitter_hz", &PhysicalParams::sigma_jitter, constants::two_pi, "Hz"},
    {"gamma_bg", &PhysicalParams::gamma_bg, 1.0, "1/s"},
    {"mirror_loss_ppm", &PhysicalParams::mirror_loss_ppm, 1.0, "ppm"},
    {"mirror_trans_ppm", &PhysicalParams::mirror_trans_ppm, 1.0, "ppm"},
    {"cavity_length_m", &PhysicalParams::cavity_length, 1.0, "m"},
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

void require_positive(std::vector<std::string>& out, const char* name, double v) {
  if (!(std::isfinite(v) && v > 0.0)) out.push_back(std::string(name) + " must be finite and > 0 (got " + csv::format_double(v) + ")");
}

void require_non_negative(std::vector<std::string>& out, const char* name, double v) {
  if (!(std::isfinite(v) && v >= 0.0)) out.push_back(std::string(name) + " must be finite and >= 0 (got " + csv::format_double(v) + ")");
}

}  // namespace

std::vector<std::string> violations(const PhysicalParams& p) {
  std::vector<std::string> out;
  require_positive(out, "g0", p.g0);
  require_positive(out, "kappa", p.kappa);
  require_positive(out, "gamma", p.gamma);
  require_positive(out, "omega_z", p.omega_z);
  require_positive(out, "lambda_p", p.lambda_p);
  require_positive(out, "lambda_t", p.lambda_t);
  require_positive(out, "mass", p.mass);
  require_positive(out, "trap_depth_U", p.trap_depth_U);
  require_positive(out, "temperature", p.temperature);
  require_positive(out, "mirror_loss_ppm", p.mirror_loss_ppm);
  require_positive(out, "mirror_trans_ppm", p.mirror_trans_ppm);
  require_positive(out, "cavity_length", p.cavity_length);
  require_non_negative(out, "sigma_jitter", p.sigma_jitter);
  require_non_negative(out, "gamma_bg", p.gamma_bg);
  if (!(p.eta_det > 0.0 && p.eta_det <= 1.0)) {
    out.push_back("eta_det must lie in (0, 1] (got " + csv::format_double(p.eta_det) + ")");
  }
  // Far-detuned regime: the dispersive shift g^2/delta_ca is only valid for |delta_ca| >> g0.
  if (!(std::isfinite(p.delta_ca) && std::abs(p.delta_ca) > 100.0 * p.g0)) {
    out.push_back("|delta_ca| must exceed 100 * g0 (got delta_ca = " + csv::format_double(p.delta_ca) +
                  " rad/s, g0 = " + csv::format_double(p.g0) + " rad/s)");
  }
  return out;
}

void validate(const PhysicalParams& params) {
  auto v = violations(params);
  if (!v.empty()) throw ValidationError(std::move(v));
}

DerivedParams derive(const PhysicalParams& p) {
  DerivedParams d{};
  d.cooperativity_C = cooperativity(p);
  const double round_trip_loss = 2.0 * (p.mirror_loss_ppm + p.mirror_trans_ppm) * 1e-6;
  const double finesse = constants::two_pi / round_trip_loss;
  const double free_spectral_range = constants::speed_of_light / (2.0 * p.cavity_length);  // Hz
  d.kappa_from_mirrors = constants::two_pi * free_spectral_range / (2.0 * finesse);
  d.k_p = probe_wavevector(p);
  d.k_t = constants::two_pi / p.lambda_t;
  d.f0 = single_photon_force(p);
  return d;
}

ConfigDocument ConfigDocument::parse(std::string_view text) {
  ConfigDocument doc;
  std::size_t start = 0;
  int line_no = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    auto line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    start = (end == std::string_view::npos) ? text.size() + 1 : end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("", "line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = std::string(trim(line.substr(0, eq)));
    const auto value = std::string(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError("", "line " + std::to_string(line_no) + ": empty key");
    if (value.empty()) throw ConfigError(key, "key '" + key + "': empty value");
    if (!doc.entries_.emplace(key, value).second) throw ConfigError(key, "key '" + key + "': duplicated");
  }
  return doc;
}

bool ConfigDocument::contains(std::string_view key) const { return entries_.find(key) != entries_.end(); }

std::optional<std::string> ConfigDocument::text(std::string_view key) {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  consumed_.insert(it->first);
  return it->second;
}

std::optional<double> ConfigDocument::number(std::string_view key) {
  const auto raw = text(key);
  if (!raw) return std::nullopt;
  std::string_view s = *raw;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ConfigError(std::string(key), "key '" + std::string(key) + "': cannot parse '" + *raw + "' as a number");
  }
  return v;
}

std::optional<std::uint64_t> ConfigDocument::unsigned_integer(std::string_view key) {
  const auto raw = text(key);
  if (!raw) return std::nullopt;
  std::uint64_t v = 0;
  const auto* end = raw->data() + raw->size();
  auto [ptr, ec] = std::from_chars(raw->data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(std::string(key), "key '" + std::string(key) + "': cannot parse '" + *raw + "' as an unsigned integer");
  }
  return v;
}

std::vector<std::string> ConfigDocument::unconsumed() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (!consumed_.contains(k)) out.push_back(k);
  }
  return out;
}

void ConfigDocument::require_all_consumed() const {
  const auto left = unconsumed();
  if (!left.empty()) throw ConfigError(left.front(), "unknown key '" + left.front() + "'");
}

PhysicalParams params_from(ConfigDocument& doc) {
  PhysicalParams p;
  for (const auto& spec : kKeys) {
    if (auto v = doc.number(spec.key)) p.*(spec.field) = *v * spec.scale;
  }
  return p;
}

PhysicalParams load_config(std::string_view text) {
  auto doc = ConfigDocument::parse(text);
  PhysicalParams p = params_from(doc);
  doc.require_all_consumed();
  validate(p);
  return p;
}

std::vector<ParamEntry> export_params(const PhysicalParams& params) {
  std::vector<ParamEntry> out;
  for (const auto& spec : kKeys) out.push_back({spec.key, params.*(spec.field) / spec.scale, spec.unit});
  const auto d = derive(params);
  out.push_back({"cooperativity_C", d.cooperativity_C, "1"});
  out.push_back({"kappa_from_mirrors_hz", d.kappa_from_mirrors / constants::two_pi, "Hz"});
  out.push_back({"k_p", d.k_p, "1/m"});
  out.push_back({"k_t", d.k_t, "1/m"});
  out.push_back({"f0", d.f0, "N"});
  return out;
}

std::string params_to_csv(const PhysicalParams& params) {
  std::string out = "key,value,unit\n";
  for (const auto& e : export_params(params)) out += e.key + "," + csv::format_double(e.value) + "," + e.unit + "\n";
  return out;
}

}  // namespace backaction
