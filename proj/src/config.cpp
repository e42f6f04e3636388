#include "aastereo/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "aastereo/error.hpp"

namespace aastereo {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool valid_name(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

}  // namespace

IniDocument IniDocument::parse(const std::string& text) {
  IniDocument doc;
  std::istringstream in(text);
  std::string raw, section;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("unterminated section header", line);
      section = trim(s.substr(1, s.size() - 2));
      if (!valid_name(section)) throw ConfigError("bad section name '" + section + "'", line);
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value', got '" + s + "'", line);
    const std::string key = trim(s.substr(0, eq));
    if (!valid_name(key)) throw ConfigError("bad key '" + key + "'", line);
    const std::string full = section.empty() ? key : section + "." + key;
    if (doc.entries_.count(full)) throw ConfigError("duplicate key '" + full + "'", line);
    doc.entries_[full] = Entry{trim(s.substr(eq + 1)), line};
  }
  return doc;
}

IniDocument IniDocument::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

const IniDocument::Entry* IniDocument::find(const std::string& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

std::optional<std::string> IniDocument::get(const std::string& key) const {
  const Entry* e = find(key);
  if (!e) return std::nullopt;
  return e->value;
}

void IniDocument::set(const std::string& key, const std::string& value) {
  entries_[key].value = value;
}

std::size_t IniDocument::get_size(const std::string& key, std::size_t fallback) const {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

std::uint64_t IniDocument::get_u64(const std::string& key, std::uint64_t fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  std::uint64_t v = 0;
  const char* end = e->value.data() + e->value.size();
  const auto [ptr, ec] = std::from_chars(e->value.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + e->value + "'", e->line);
  }
  return v;
}

double IniDocument::get_double(const std::string& key, double fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(e->value, &used);
    if (used == e->value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + e->value + "'", e->line);
}

bool IniDocument::get_bool(const std::string& key, bool fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  if (e->value == "true" || e->value == "1" || e->value == "on") return true;
  if (e->value == "false" || e->value == "0" || e->value == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + e->value + "'", e->line);
}

std::vector<double> IniDocument::get_doubles(const std::string& key,
                                             std::vector<double> fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  std::vector<double> out;
  std::string item;
  std::istringstream in(e->value);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(key + ": bad list element '" + item + "'", e->line);
    }
  }
  return out;
}

void IniDocument::require_known(const std::vector<std::string>& allowed) const {
  for (const auto& [key, entry] : entries_) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "'", entry.line);
    }
  }
}

std::string IniDocument::to_text() const {
  std::ostringstream out;
  for (const auto& [key, entry] : entries_) {
    if (key.find('.') == std::string::npos) out << key << " = " << entry.value << '\n';
  }
  std::string current;
  for (const auto& [key, entry] : entries_) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) continue;
    const std::string section = key.substr(0, dot);
    if (section != current) {
      if (out.tellp() > 0) out << '\n';
      out << '[' << section << "]\n";
      current = section;
    }
    out << key.substr(dot + 1) << " = " << entry.value << '\n';
  }
  return out.str();
}

}  // namespace aastereo
