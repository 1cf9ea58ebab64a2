#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Small text/number I/O helpers shared by the DSL, CSV emission, and the CLI.
// Doubles are formatted as shortest round-trip decimals so that emitted files
// re-parse to bit-identical values.

namespace nvdd::io {

std::string format_double(double x);
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

std::string read_text_file(const std::string& path);  // throws on failure
void write_text_file(const std::string& path, const std::string& content);

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::string to_string() const;
  void write(const std::string& path) const;
};

}  // namespace nvdd::io
