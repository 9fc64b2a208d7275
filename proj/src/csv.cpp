#include "backaction/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "backaction/errors.hpp"

namespace backaction::csv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_number(std::string_view s) {
  s = trim(s);
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    // from_chars does not accept a leading '+', "inf" spelled differently, etc.
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (!s.empty() && s.front() == '+') return parse_number(s.substr(1));
    throw ConfigError("", "csv: not a number: '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string header_block(std::span<const std::pair<std::string, std::string>> entries) {
  std::string out;
  for (const auto& [k, v] : entries) out += "# " + k + "=" + v + "\n";
  return out;
}

Table::Table(std::vector<std::string> columns) : columns_(std::move(columns)) {
  if (columns_.empty()) throw DomainError("csv::Table needs at least one column");
}

void Table::add_row(std::span<const double> values) {
  if (values.size() != columns_.size()) throw DomainError("csv::Table row width mismatch");
  data_.insert(data_.end(), values.begin(), values.end());
}

void Table::add_row(std::initializer_list<double> values) {
  add_row(std::span<const double>(values.begin(), values.size()));
}

std::string Table::to_string() const {
  std::string out;
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (c) out += ',';
    out += columns_[c];
  }
  out += '\n';
  const std::size_t width = columns_.size();
  for (std::size_t r = 0; r < rows(); ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      if (c) out += ',';
      out += format_double(data_[r * width + c]);
    }
    out += '\n';
  }
  return out;
}

std::size_t ParsedCsv::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  throw ConfigError(std::string(name), "csv: missing column '" + std::string(name) + "'");
}

ParsedCsv parse(std::string_view text) {
  ParsedCsv out;
  bool have_header = false;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    const auto line = trim(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    start = (end == std::string_view::npos) ? text.size() + 1 : end + 1;
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto body = trim(line.substr(1));
      const auto eq = body.find('=');
      if (eq != std::string_view::npos) {
        out.metadata.emplace_back(std::string(trim(body.substr(0, eq))), std::string(trim(body.substr(eq + 1))));
      }
      continue;
    }
    const auto fields = split(line, ',');
    if (!have_header) {
      for (auto f : fields) out.columns.emplace_back(f);
      have_header = true;
      continue;
    }
    if (fields.size() != out.columns.size()) {
      throw ConfigError("", "csv: row has " + std::to_string(fields.size()) + " fields, header has " +
                                std::to_string(out.columns.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (auto f : fields) row.push_back(parse_number(f));
    out.rows.push_back(std::move(row));
  }
  if (!have_header) throw ConfigError("", "csv: no header row");
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("", "cannot open '" + path + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw ConfigError("", "write to '" + path + "' failed");
}

}  // namespace backaction::csv
