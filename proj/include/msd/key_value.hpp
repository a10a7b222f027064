#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace msd {

/// Flat `key = value` document. `[section]` headers prefix following keys
/// as `section.key`; `#` and `;` start comments.
class KeyValueFile {
 public:
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };

  static KeyValueFile parse(const std::string& text);
  static KeyValueFile load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::string require(const std::string& key) const;
  double require_double(const std::string& key) const;
  std::optional<double> get_double(const std::string& key) const;
  std::optional<long long> get_int(const std::string& key) const;
  std::vector<double> require_doubles(const std::string& key) const;
  void set(const std::string& key, std::string value);

  const std::map<std::string, Entry>& entries() const { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
};

/// Parses a list of reals separated by commas and/or whitespace.
std::vector<double> parse_double_list(const std::string& text);
double parse_double(const std::string& text);

}  // namespace msd
