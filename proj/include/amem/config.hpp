#ifndef AMEM_CONFIG_HPP
#define AMEM_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace amem {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Plain-text key-value file:
///
///   # comment
///   prior = "uniform"
///   prior_params = [0.0, 1.0]
///   replications = 100
///
/// Values are numbers, double-quoted strings, booleans, or flat lists of
/// numbers or strings.
class ConfigFile {
 public:
  using Scalar = std::variant<double, std::string, bool>;
  using Value = std::variant<Scalar, std::vector<Scalar>>;

  static ConfigFile parse(std::string_view text);
  static ConfigFile load(const std::filesystem::path& path);

  bool has(std::string_view key) const;
  double number(std::string_view key) const;
  double number(std::string_view key, double fallback) const;
  std::int64_t integer(std::string_view key) const;
  std::int64_t integer(std::string_view key, std::int64_t fallback) const;
  std::string string(std::string_view key) const;
  std::string string(std::string_view key, std::string fallback) const;
  bool boolean(std::string_view key, bool fallback) const;
  std::vector<double> numbers(std::string_view key) const;
  std::vector<double> numbers(std::string_view key, std::vector<double> fallback) const;

  /// Overrides (or adds) a numeric entry, e.g. from the command line.
  void set_number(std::string key, double value);
  std::vector<std::string> keys() const;

 private:
  const Value& at(std::string_view key) const;
  std::map<std::string, Value, std::less<>> entries_;
};

}  // namespace amem

#endif  // AMEM_CONFIG_HPP
