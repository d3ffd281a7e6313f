#include "amem/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace amem {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Drops a trailing comment that is not inside a string literal.
std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

ConfigFile::Scalar parse_scalar(std::string_view text, int line_no) {
  text = trim(text);
  if (text.empty()) throw ConfigError(fmt::format("line {}: missing value", line_no));
  if (text.front() == '"') {
    if (text.size() < 2 || text.back() != '"')
      throw ConfigError(fmt::format("line {}: unterminated string", line_no));
    return std::string(text.substr(1, text.size() - 2));
  }
  if (text == "true") return true;
  if (text == "false") return false;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError(fmt::format("line {}: cannot parse value '{}'", line_no, text));
  return value;
}

}  // namespace

ConfigFile ConfigFile::parse(std::string_view text) {
  ConfigFile cfg;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(strip_comment(raw));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(fmt::format("line {}: expected 'key = value'", line_no));
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view rhs = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(fmt::format("line {}: empty key", line_no));
    if (cfg.entries_.contains(key)) throw ConfigError(fmt::format("line {}: duplicate key '{}'", line_no, key));
    if (!rhs.empty() && rhs.front() == '[') {
      if (rhs.back() != ']') throw ConfigError(fmt::format("line {}: unterminated list", line_no));
      std::vector<Scalar> items;
      std::string_view body = trim(rhs.substr(1, rhs.size() - 2));
      while (!body.empty()) {
        const auto comma = body.find(',');
        items.push_back(parse_scalar(body.substr(0, comma), line_no));
        if (comma == std::string_view::npos) break;
        body = trim(body.substr(comma + 1));
      }
      cfg.entries_.emplace(key, std::move(items));
    } else {
      cfg.entries_.emplace(key, parse_scalar(rhs, line_no));
    }
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool ConfigFile::has(std::string_view key) const { return entries_.find(key) != entries_.end(); }

const ConfigFile::Value& ConfigFile::at(std::string_view key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(fmt::format("missing config key '{}'", key));
  return it->second;
}

double ConfigFile::number(std::string_view key) const {
  const auto* scalar = std::get_if<Scalar>(&at(key));
  const double* v = scalar ? std::get_if<double>(scalar) : nullptr;
  if (!v) throw ConfigError(fmt::format("config key '{}' must be a number", key));
  return *v;
}

double ConfigFile::number(std::string_view key, double fallback) const { return has(key) ? number(key) : fallback; }

std::int64_t ConfigFile::integer(std::string_view key) const {
  const double v = number(key);
  if (v != std::floor(v) || std::abs(v) > 9.007199254740992e15)
    throw ConfigError(fmt::format("config key '{}' must be an integer", key));
  return static_cast<std::int64_t>(v);
}

std::int64_t ConfigFile::integer(std::string_view key, std::int64_t fallback) const {
  return has(key) ? integer(key) : fallback;
}

std::string ConfigFile::string(std::string_view key) const {
  const auto* scalar = std::get_if<Scalar>(&at(key));
  const std::string* v = scalar ? std::get_if<std::string>(scalar) : nullptr;
  if (!v) throw ConfigError(fmt::format("config key '{}' must be a quoted string", key));
  return *v;
}

std::string ConfigFile::string(std::string_view key, std::string fallback) const {
  return has(key) ? string(key) : std::move(fallback);
}

bool ConfigFile::boolean(std::string_view key, bool fallback) const {
  if (!has(key)) return fallback;
  const auto* scalar = std::get_if<Scalar>(&at(key));
  const bool* v = scalar ? std::get_if<bool>(scalar) : nullptr;
  if (!v) throw ConfigError(fmt::format("config key '{}' must be true or false", key));
  return *v;
}

std::vector<double> ConfigFile::numbers(std::string_view key) const {
  const Value& value = at(key);
  if (const auto* scalar = std::get_if<Scalar>(&value)) {
    if (const double* v = std::get_if<double>(scalar)) return {*v};
    throw ConfigError(fmt::format("config key '{}' must be a list of numbers", key));
  }
  std::vector<double> out;
  for (const Scalar& item : std::get<std::vector<Scalar>>(value)) {
    const double* v = std::get_if<double>(&item);
    if (!v) throw ConfigError(fmt::format("config key '{}' must be a list of numbers", key));
    out.push_back(*v);
  }
  return out;
}

std::vector<double> ConfigFile::numbers(std::string_view key, std::vector<double> fallback) const {
  return has(key) ? numbers(key) : std::move(fallback);
}

void ConfigFile::set_number(std::string key, double value) { entries_[std::move(key)] = Scalar{value}; }

std::vector<std::string> ConfigFile::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

}  // namespace amem
