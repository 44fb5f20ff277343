#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ahand {

// Nested key-value config text:
//
//   [section]
//   key = value            # comment
//   list = 0.1 0.2 0.3
//
// Keys are addressed as "section.key". Unknown keys are kept verbatim so a
// file can round-trip.
class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string s = strip_comment(line);
      s = trim(s);
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']')
          throw std::runtime_error("config: bad section header at line " + std::to_string(lineno));
        section = trim(s.substr(1, s.size() - 2));
        continue;
      }
      auto eq = s.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("config: expected key = value at line " + std::to_string(lineno));
      std::string key = trim(s.substr(0, eq));
      std::string val = trim(s.substr(eq + 1));
      if (key.empty())
        throw std::runtime_error("config: empty key at line " + std::to_string(lineno));
      c.values_[section.empty() ? key : section + "." + key] = val;
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  void set(const std::string& key, const std::string& val) { values_[key] = val; }
  void set(const std::string& key, double v) { values_[key] = format_double(v); }
  void set(const std::string& key, int v) { values_[key] = std::to_string(v); }
  void set(const std::string& key, bool v) { values_[key] = v ? "true" : "false"; }
  void set(const std::string& key, const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ' ';
      s += format_double(v[i]);
    }
    values_[key] = s;
  }

  std::string get_str(const std::string& key, const std::string& dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : it->second;
  }
  std::string get_str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::runtime_error("config: missing key " + key);
    return it->second;
  }

  double get_double(const std::string& key, double dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : parse_double(it->second, key);
  }
  int get_int(const std::string& key, int dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : static_cast<int>(std::stol(it->second));
  }
  bool get_bool(const std::string& key, bool dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::runtime_error("config: bad bool for " + key + ": " + v);
  }
  std::vector<double> get_vec(const std::string& key, const std::vector<double>& dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    std::vector<double> out;
    std::istringstream ss(it->second);
    double x;
    while (ss >> x) out.push_back(x);
    return out;
  }

  // Canonical text: sections sorted, keys sorted within section. Used both
  // for write-out and for hashing.
  std::string serialize() const {
    std::string out;
    std::string cur_section = "\x01";  // sentinel != any real section
    for (const auto& [k, v] : values_) {
      auto dot = k.rfind('.');
      std::string section = dot == std::string::npos ? "" : k.substr(0, dot);
      std::string key = dot == std::string::npos ? k : k.substr(dot + 1);
      if (section != cur_section) {
        if (!out.empty()) out += '\n';
        out += "[" + section + "]\n";
        cur_section = section;
      }
      out += key + " = " + v + "\n";
    }
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("config: cannot write " + path);
    f << serialize();
  }

  // FNV-1a over the canonical serialization
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : serialize()) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  // overlay other's values on top of this one
  void merge(const Config& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
  }

  const std::map<std::string, std::string>& items() const { return values_; }

 private:
  static std::string strip_comment(const std::string& s) {
    auto h = s.find('#');
    return h == std::string::npos ? s : s.substr(0, h);
  }
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }
  static std::string format_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
  }
  static double parse_double(const std::string& s, const std::string& key) {
    try {
      std::size_t pos = 0;
      double v = std::stod(s, &pos);
      return v;
    } catch (const std::exception&) {
      throw std::runtime_error("config: bad number for " + key + ": " + s);
    }
  }

  std::map<std::string, std::string> values_;
};

}  // namespace ahand
