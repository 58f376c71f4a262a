#include "nvtherm/output.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "nvtherm/errors.hpp"

namespace nvtherm::output {

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return {buf, ptr};
}

Column num_column(std::string name, std::vector<double> values) {
  Column c;
  c.name = std::move(name);
  c.numbers = std::move(values);
  return c;
}

Column int_column(std::string name, std::vector<long long> values) {
  Column c;
  c.name = std::move(name);
  c.integers = std::move(values);
  return c;
}

void write_csv(const std::string& path, const std::vector<Column>& columns) {
  if (columns.empty()) throw InvalidArgument("csv: no columns");
  const std::size_t rows = columns.front().size();
  for (const auto& col : columns) {
    if (col.size() != rows) {
      throw InvalidArgument("csv: column '" + col.name + "' has mismatched length");
    }
  }
  std::string text;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (c) text += ',';
    text += columns[c].name;
  }
  text += '\n';
  char buf[64];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (c) text += ',';
      const Column& col = columns[c];
      if (col.integers.empty()) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), col.numbers[r]);
        (void)ec;
        text.append(buf, ptr);
      } else {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), col.integers[r]);
        (void)ec;
        text.append(buf, ptr);
      }
    }
    text += '\n';
  }
  write_text(path, text);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open output file '" + path + "'");
  out << text;
  if (!out) throw ConfigError("failed writing output file '" + path + "'");
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
  return buf;
}

}  // namespace nvtherm::output
