#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace aastereo {

// Flat "key = value" text with optional [section] headers. Keys are stored
// as "section.key" (or just "key" before the first header). '#' and ';'
// start comment lines. Parse errors carry the 1-based line number.
class IniDocument {
 public:
  static IniDocument parse(const std::string& text);
  static IniDocument load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  // Typed accessors; malformed values raise ConfigError with the line of the
  // offending entry.
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;

  // Rejects any key not listed, naming it and its line.
  void require_known(const std::vector<std::string>& allowed) const;

  std::string to_text() const;

 private:
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };
  const Entry* find(const std::string& key) const;

  std::map<std::string, Entry> entries_;
};

}  // namespace aastereo
