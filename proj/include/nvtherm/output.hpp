#pragma once

#include <string>
#include <vector>

namespace nvtherm::output {

// Shortest round-trip decimal form, locale independent, so identical runs
// produce byte-identical files.
std::string format_number(double v);

struct Column {
  std::string name;
  std::vector<double> numbers;
  std::vector<long long> integers;  // used instead of numbers when non-empty

  [[nodiscard]] std::size_t size() const {
    return integers.empty() ? numbers.size() : integers.size();
  }
};

Column num_column(std::string name, std::vector<double> values);
Column int_column(std::string name, std::vector<long long> values);

// Header row plus one line per record, '\n' endings. All columns must have
// equal length. Throws ConfigError when the file cannot be written.
void write_csv(const std::string& path, const std::vector<Column>& columns);

void write_text(const std::string& path, const std::string& text);

// e.g. "2026-08-15T09:30:00Z"
std::string utc_timestamp();

}  // namespace nvtherm::output
