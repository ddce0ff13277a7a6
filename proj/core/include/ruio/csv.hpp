#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace ruio {

/// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index for a header name, -1 when absent.
  int column(const std::string& name) const;
  /// Cell parsed as a double; throws ConfigError on malformed numbers.
  double number(std::size_t row, std::size_t col) const;
};

void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

CsvTable read_csv(const std::filesystem::path& path);

}  // namespace ruio
