#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ram/numerics.hpp"

namespace ram {

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Flat `section.key = value` settings. Every key has a default and a type;
/// unknown keys and unparsable values are rejected. Lines starting with '#'
/// are comments.
class Config {
 public:
  Config();

  void set(std::string_view key, std::string_view value);
  /// Parses "key=value".
  void set_assignment(std::string_view assignment);
  void load_file(const std::filesystem::path& path);

  const std::string& get(std::string_view key) const;
  int get_int(std::string_view key) const;
  double get_double(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  std::vector<double> get_doubles(std::string_view key) const;

  /// Sorted key=value lines.
  std::string serialize() const;
  std::string digest() const;

  static std::vector<std::string> keys();

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

std::vector<double> parse_double_list(std::string_view text);

}  // namespace ram
