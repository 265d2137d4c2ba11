#pragma once

#include <map>
#include <string>

namespace pira::cli {

// Minimal INI: [section] headers, key = value lines, '#' or ';' comments.
// Sections and keys are kept sorted so an echoed file is deterministic.
struct IniFile {
  std::map<std::string, std::map<std::string, std::string>> sections;

  static IniFile load(const std::string& path);
  static IniFile parse(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback = "") const;
  void set(const std::string& section, const std::string& key, const std::string& value);
  void save(const std::string& path) const;
  std::string dump() const;
};

}  // namespace pira::cli
