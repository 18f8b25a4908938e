#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cop/core.hpp"

namespace cop {

// Flat key = value text with repeatable [section] blocks. Values stay
// strings until a typed accessor asks for them, so unknown keys are
// detectable and error messages can quote the original text.

struct ConfigSection {
  std::string name;  // empty for the leading global block
  std::vector<std::pair<std::string, std::string>> entries;

  bool has(const std::string& key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return true;
    return false;
  }

  const std::string& get(const std::string& key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return v;
    throw std::runtime_error("config: missing key '" + key + "'" +
                             (name.empty() ? "" : " in [" + name + "]"));
  }

  std::string get_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
  }

  double get_double(const std::string& key) const { return parse_double(key, get(key)); }
  double get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }

  long long get_int(const std::string& key) const {
    const std::string& text = get(key);
    size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != text.size())
      throw std::runtime_error("config: key '" + key + "' is not an integer: '" +
                               text + "'");
    return v;
  }
  long long get_int_or(const std::string& key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
  }

  bool get_bool(const std::string& key) const {
    const std::string& text = get(key);
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw std::runtime_error("config: key '" + key + "' is not a boolean: '" +
                             text + "'");
  }
  bool get_bool_or(const std::string& key, bool fallback) const {
    return has(key) ? get_bool(key) : fallback;
  }

  // comma-separated triple
  Vec3 get_vec3(const std::string& key) const {
    const std::string& text = get(key);
    std::vector<double> parts;
    std::string cur;
    std::stringstream ss(text);
    while (std::getline(ss, cur, ',')) parts.push_back(parse_double(key, cur));
    if (parts.size() != 3)
      throw std::runtime_error("config: key '" + key + "' needs 3 comma-separated values: '" +
                               text + "'");
    return {parts[0], parts[1], parts[2]};
  }

 private:
  static double parse_double(const std::string& key, const std::string& text) {
    size_t used = 0;
    double v = 0;
    std::string trimmed = text;
    size_t a = trimmed.find_first_not_of(" \t");
    size_t b = trimmed.find_last_not_of(" \t");
    if (a == std::string::npos)
      throw std::runtime_error("config: key '" + key + "' is empty");
    trimmed = trimmed.substr(a, b - a + 1);
    try {
      v = std::stod(trimmed, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != trimmed.size())
      throw std::runtime_error("config: key '" + key + "' is not a number: '" +
                               text + "'");
    return v;
  }
};

struct Config {
  ConfigSection globals;
  std::vector<ConfigSection> sections;  // in file order, repeats allowed

  std::vector<const ConfigSection*> sections_named(const std::string& name) const {
    std::vector<const ConfigSection*> out;
    for (const auto& s : sections)
      if (s.name == name) out.push_back(&s);
    return out;
  }

  static Config parse(std::istream& is) {
    Config cfg;
    ConfigSection* current = &cfg.globals;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      size_t a = line.find_first_not_of(" \t");
      if (a == std::string::npos) continue;
      size_t b = line.find_last_not_of(" \t");
      line = line.substr(a, b - a + 1);
      if (line.front() == '[') {
        if (line.back() != ']')
          throw std::runtime_error("config: line " + std::to_string(line_no) +
                                   ": unterminated section header");
        std::string name = line.substr(1, line.size() - 2);
        if (name.empty())
          throw std::runtime_error("config: line " + std::to_string(line_no) +
                                   ": empty section name");
        cfg.sections.push_back({name, {}});
        current = &cfg.sections.back();
        continue;
      }
      size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("config: line " + std::to_string(line_no) +
                                 ": expected key = value");
      std::string key = line.substr(0, eq);
      std::string value = line.substr(eq + 1);
      auto trim = [](std::string s) {
        size_t x = s.find_first_not_of(" \t");
        if (x == std::string::npos) return std::string();
        size_t y = s.find_last_not_of(" \t");
        return s.substr(x, y - x + 1);
      };
      key = trim(key);
      value = trim(value);
      if (key.empty())
        throw std::runtime_error("config: line " + std::to_string(line_no) +
                                 ": empty key");
      current->entries.emplace_back(key, value);
    }
    return cfg;
  }

  static Config parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    return parse(is);
  }

  static Config parse_text(const std::string& text) {
    std::istringstream is(text);
    return parse(is);
  }
};

}  // namespace cop
