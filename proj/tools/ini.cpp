#include "ini.h"

#include <fstream>
#include <sstream>

#include "pira/errors.h"

namespace pira::cli {

namespace {
std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}
}  // namespace

IniFile IniFile::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

IniFile IniFile::parse(const std::string& text) {
  IniFile ini;
  std::istringstream in(text);
  std::string line, section;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ParseError("unterminated section header", line_no);
      section = trim(t.substr(1, t.size() - 2));
      ini.sections[section];
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line_no);
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ParseError("empty key", line_no);
    ini.sections[section][key] = trim(t.substr(eq + 1));
  }
  return ini;
}

bool IniFile::has(const std::string& section, const std::string& key) const {
  auto s = sections.find(section);
  return s != sections.end() && s->second.count(key) > 0;
}

std::string IniFile::get(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
  auto s = sections.find(section);
  if (s == sections.end()) return fallback;
  auto k = s->second.find(key);
  return k == s->second.end() ? fallback : k->second;
}

void IniFile::set(const std::string& section, const std::string& key,
                  const std::string& value) {
  sections[section][key] = value;
}

std::string IniFile::dump() const {
  std::ostringstream out;
  bool first = true;
  for (const auto& [section, kv] : sections) {
    if (!first) out << "\n";
    first = false;
    out << "[" << section << "]\n";
    for (const auto& [key, value] : kv) out << key << " = " << value << "\n";
  }
  return out.str();
}

void IniFile::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write config file: " + path);
  out << dump();
  if (!out) throw IoError("failed while writing " + path);
}

}  // namespace pira::cli
