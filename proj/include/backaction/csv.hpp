#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace backaction::csv {

/// Lossless decimal rendering (17 significant digits).
std::string format_double(double value);

/// Provenance header block, one `# key=value` line per entry.
std::string header_block(std::span<const std::pair<std::string, std::string>> entries);

/// Columns of numbers with a named header row.
class Table {
 public:
  explicit Table(std::vector<std::string> columns);

  void add_row(std::span<const double> values);
  void add_row(std::initializer_list<double> values);

  const std::vector<std::string>& columns() const { return columns_; }
  std::size_t rows() const { return data_.size() / columns_.size(); }
  double at(std::size_t row, std::size_t col) const { return data_[row * columns_.size() + col]; }

  std::string to_string() const;

 private:
  std::vector<std::string> columns_;
  std::vector<double> data_;
};

/// Parsed CSV: comment lines (`# key=value`) collected as metadata, first
/// non-comment line as header, remaining lines as numeric rows.
struct ParsedCsv {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column_index(std::string_view name) const;
};

ParsedCsv parse(std::string_view text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace backaction::csv
