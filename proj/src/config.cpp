#include "nvtherm/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nvtherm/errors.hpp"

namespace nvtherm::config {

namespace {

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
  std::ostringstream os;
  os << origin << ':' << line << ": " << msg;
  throw ConfigError(os.str());
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// Removes a trailing comment, honoring quoted strings.
std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '"' && (i == 0 || s[i - 1] != '\\')) quoted = !quoted;
    if (c == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

bool valid_key(const std::string& k) {
  if (k.empty() || k.front() == '.' || k.back() == '.') return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) {
      return false;
    }
  }
  return true;
}

std::string parse_quoted(const std::string& raw, const std::string& origin, int line) {
  std::string out;
  for (size_t i = 1; i + 1 < raw.size(); ++i) {
    char c = raw[i];
    if (c == '\\') {
      if (i + 2 >= raw.size()) fail(origin, line, "dangling escape in string");
      char e = raw[++i];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: fail(origin, line, std::string("unsupported escape \\") + e);
      }
    } else {
      out += c;
    }
  }
  return out;
}

Value parse_scalar(const std::string& raw, const std::string& origin, int line) {
  Value v;
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
    v.type = Value::Type::string;
    v.str = parse_quoted(raw, origin, line);
    return v;
  }
  if (raw == "true" || raw == "false") {
    v.type = Value::Type::boolean;
    v.flag = raw == "true";
    return v;
  }
  double num = 0.0;
  const char* begin = raw.data();
  const char* end = raw.data() + raw.size();
  auto [ptr, ec] = std::from_chars(begin, end, num);
  if (ec != std::errc() || ptr != end) {
    fail(origin, line, "cannot parse value '" + raw + "' (expected string, bool or number)");
  }
  v.type = Value::Type::number;
  v.num = num;
  return v;
}

Value parse_value(const std::string& raw, const std::string& origin, int line) {
  if (!raw.empty() && raw.front() == '[') {
    if (raw.back() != ']') fail(origin, line, "array must open and close on one line");
    Value v;
    v.type = Value::Type::array;
    std::string body = raw.substr(1, raw.size() - 2);
    std::string item;
    bool quoted = false;
    auto flush = [&]() {
      std::string s = trim(item);
      if (!s.empty()) v.items.push_back(parse_scalar(s, origin, line));
      item.clear();
    };
    for (char c : body) {
      if (c == '"') quoted = !quoted;
      if (c == ',' && !quoted) {
        flush();
      } else {
        item += c;
      }
    }
    flush();
    return v;
  }
  return parse_scalar(raw, origin, line);
}

void format_number(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  out.append(buf, ptr);
}

void format_scalar(std::string& out, const Value& v) {
  switch (v.type) {
    case Value::Type::string:
      out += '"';
      for (char c : v.str) {
        switch (c) {
          case '"': out += "\\\""; break;
          case '\\': out += "\\\\"; break;
          case '\n': out += "\\n"; break;
          case '\t': out += "\\t"; break;
          default: out += c;
        }
      }
      out += '"';
      break;
    case Value::Type::boolean:
      out += v.flag ? "true" : "false";
      break;
    case Value::Type::number:
      format_number(out, v.num);
      break;
    case Value::Type::array:
      out += '[';
      for (size_t i = 0; i < v.items.size(); ++i) {
        if (i) out += ", ";
        format_scalar(out, v.items[i]);
      }
      out += ']';
      break;
  }
}

}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str(), path);
}

Config Config::from_string(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream in(text);
  std::string raw;
  std::string prefix;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') fail(origin, line_no, "unterminated table header");
      std::string name = trim(line.substr(1, line.size() - 2));
      if (!valid_key(name)) fail(origin, line_no, "invalid table name '" + name + "'");
      prefix = name + '.';
      continue;
    }

    size_t eq = std::string::npos;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '=' && !quoted) {
        eq = i;
        break;
      }
    }
    if (eq == std::string::npos) fail(origin, line_no, "expected key = value");

    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!valid_key(key)) fail(origin, line_no, "invalid key '" + key + "'");
    if (value.empty()) fail(origin, line_no, "missing value for key '" + key + "'");

    std::string full = prefix + key;
    if (cfg.entries_.count(full)) fail(origin, line_no, "duplicate key '" + full + "'");
    cfg.entries_.emplace(full, parse_value(value, origin, line_no));
  }
  return cfg;
}

bool Config::has(const std::string& key) const { return entries_.count(key) > 0; }

double Config::number_or(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  if (it->second.type != Value::Type::number) {
    throw ConfigError("config key '" + key + "' must be a number");
  }
  return it->second.num;
}

double Config::require_number(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("missing required config key '" + key + "'");
  if (it->second.type != Value::Type::number) {
    throw ConfigError("config key '" + key + "' must be a number");
  }
  return it->second.num;
}

bool Config::boolean_or(const std::string& key, bool fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  if (it->second.type != Value::Type::boolean) {
    throw ConfigError("config key '" + key + "' must be true or false");
  }
  return it->second.flag;
}

std::string Config::string_or(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  if (it->second.type != Value::Type::string) {
    throw ConfigError("config key '" + key + "' must be a string");
  }
  return it->second.str;
}

std::string Config::require_string(const std::string& key) const {
  if (!has(key)) throw ConfigError("missing required config key '" + key + "'");
  return string_or(key, {});
}

std::vector<double> Config::require_numbers(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("missing required config key '" + key + "'");
  if (it->second.type != Value::Type::array) {
    throw ConfigError("config key '" + key + "' must be an array of numbers");
  }
  std::vector<double> out;
  for (const auto& item : it->second.items) {
    if (item.type != Value::Type::number) {
      throw ConfigError("config key '" + key + "' must contain only numbers");
    }
    out.push_back(item.num);
  }
  return out;
}

std::vector<double> Config::numbers_or(const std::string& key,
                                       std::vector<double> fallback) const {
  if (!has(key)) return fallback;
  return require_numbers(key);
}

Vec3 Config::vec3_or(const std::string& key, Vec3 fallback) const {
  if (!has(key)) return fallback;
  auto v = require_numbers(key);
  if (v.size() != 3) throw ConfigError("config key '" + key + "' must have exactly 3 numbers");
  return {v[0], v[1], v[2]};
}

void Config::set_number(const std::string& key, double value) {
  Value v;
  v.type = Value::Type::number;
  v.num = value;
  entries_[key] = v;
}

void Config::set_string(const std::string& key, const std::string& value) {
  Value v;
  v.type = Value::Type::string;
  v.str = value;
  entries_[key] = v;
}

std::vector<std::string> Config::tables_under(const std::string& prefix) const {
  std::vector<std::string> out;
  const std::string want = prefix.empty() ? std::string() : prefix + '.';
  for (const auto& [key, value] : entries_) {
    if (key.rfind(want, 0) != 0) continue;
    size_t next = key.find('.', want.size());
    if (next == std::string::npos) continue;
    std::string table = key.substr(want.size(), next - want.size());
    if (out.empty() || out.back() != table) out.push_back(table);
  }
  return out;
}

std::string Config::dump() const {
  std::string out;
  for (const auto& [key, value] : entries_) {
    out += key;
    out += " = ";
    format_scalar(out, value);
    out += '\n';
  }
  return out;
}

std::uint64_t Config::hash() const {
  const std::string repr = dump();
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : repr) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace nvtherm::config
