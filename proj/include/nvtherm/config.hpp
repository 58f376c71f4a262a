#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nvtherm/vec3.hpp"

namespace nvtherm::config {

struct Value {
  enum class Type { string, number, boolean, array };
  Type type = Type::number;
  std::string str;
  double num = 0.0;
  bool flag = false;
  std::vector<Value> items;  // arrays of scalars
};

// Flat key/value store parsed from a TOML-style file: [table.sub] headers,
// key = value lines, strings, numbers, booleans and single-line arrays.
// Keys are stored fully dotted, so the canonical dump (sorted dotted keys)
// is independent of table layout and key order in the source file.
class Config {
public:
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text, const std::string& origin = "<config>");

  [[nodiscard]] bool has(const std::string& key) const;

  // Typed access; the require_ variants throw ConfigError naming the key.
  [[nodiscard]] double number_or(const std::string& key, double fallback) const;
  [[nodiscard]] double require_number(const std::string& key) const;
  [[nodiscard]] bool boolean_or(const std::string& key, bool fallback) const;
  [[nodiscard]] std::string string_or(const std::string& key, const std::string& fallback) const;
  [[nodiscard]] std::string require_string(const std::string& key) const;
  [[nodiscard]] std::vector<double> require_numbers(const std::string& key) const;
  [[nodiscard]] std::vector<double> numbers_or(const std::string& key,
                                               std::vector<double> fallback) const;
  [[nodiscard]] Vec3 vec3_or(const std::string& key, Vec3 fallback) const;

  void set_number(const std::string& key, double value);
  void set_string(const std::string& key, const std::string& value);

  // Immediate child table names under a dotted prefix, e.g. tables_under
  // ("heat") -> {"laser", "stripline"} for keys heat.laser.*, heat.stripline.*.
  [[nodiscard]] std::vector<std::string> tables_under(const std::string& prefix) const;

  // Canonical serialization: sorted dotted keys, shortest round-trip number
  // formatting. parse(dump()) reproduces the store exactly.
  [[nodiscard]] std::string dump() const;

  // FNV-1a over the canonical dump; stable under key reordering in the file.
  [[nodiscard]] std::uint64_t hash() const;

private:
  std::map<std::string, Value> entries_;
};

}  // namespace nvtherm::config
