#pragma once

// Plain-text persistence for scenes, cameras and poses, plus the flat
// `key = value` configuration format.

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "besplat/errors.hpp"
#include "besplat/renderer.hpp"
#include "besplat/se3.hpp"

namespace besplat {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  return is;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  return os;
}

inline void check_written(const std::ofstream& os, const std::filesystem::path& path) {
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------- scene

// One splat per line: mean(3) rotation wxyz(4) log_scale(3) opacity_logit color(3).
inline void write_scene(const std::filesystem::path& path, const Scene& scene) {
  std::ofstream os = open_output(path);
  os << "gaussians " << scene.size() << "\n";
  for (const Gaussian& g : scene) {
    const double v[14] = {g.mean.x(),      g.mean.y(),      g.mean.z(),      g.rotation.w, g.rotation.x,
                          g.rotation.y,    g.rotation.z,    g.log_scale.x(), g.log_scale.y(), g.log_scale.z(),
                          g.opacity_logit, g.color.x(),     g.color.y(),     g.color.z()};
    for (int k = 0; k < 14; ++k) os << (k ? " " : "") << format_double(v[k]);
    os << "\n";
  }
  check_written(os, path);
}

inline Scene read_scene(const std::filesystem::path& path) {
  std::ifstream is = open_input(path);
  std::string tag;
  std::size_t n = 0;
  if (!(is >> tag >> n) || tag != "gaussians") throw IoError("'" + path.string() + "': bad scene header");
  Scene scene(n);
  for (Gaussian& g : scene) {
    double v[14];
    for (double& x : v)
      if (!(is >> x)) throw IoError("'" + path.string() + "': truncated scene");
    g.mean = {v[0], v[1], v[2]};
    g.rotation = {v[3], v[4], v[5], v[6]};
    g.log_scale = {v[7], v[8], v[9]};
    g.opacity_logit = v[10];
    g.color = {v[11], v[12], v[13]};
  }
  return scene;
}

// ---------------------------------------------------------------- camera and pose

inline void write_camera(const std::filesystem::path& path, const Camera& c) {
  std::ofstream os = open_output(path);
  os << format_double(c.fx) << " " << format_double(c.fy) << " " << format_double(c.cx) << " "
     << format_double(c.cy) << " " << c.width << " " << c.height << "\n";
  check_written(os, path);
}

inline Camera read_camera(const std::filesystem::path& path) {
  std::ifstream is = open_input(path);
  Camera c;
  if (!(is >> c.fx >> c.fy >> c.cx >> c.cy >> c.width >> c.height))
    throw IoError("'" + path.string() + "': expected `fx fy cx cy width height`");
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw IoError("'" + path.string() + "': " + e.what());
  }
  return c;
}

inline void write_pose(const std::filesystem::path& path, const SE3Pose& p) {
  std::ofstream os = open_output(path);
  const double v[7] = {p.rotation.w, p.rotation.x, p.rotation.y, p.rotation.z,
                       p.translation.x, p.translation.y, p.translation.z};
  for (int k = 0; k < 7; ++k) os << (k ? " " : "") << format_double(v[k]);
  os << "\n";
  check_written(os, path);
}

inline SE3Pose read_pose(const std::filesystem::path& path) {
  std::ifstream is = open_input(path);
  SE3Pose p;
  if (!(is >> p.rotation.w >> p.rotation.x >> p.rotation.y >> p.rotation.z >> p.translation.x >> p.translation.y >>
        p.translation.z))
    throw IoError("'" + path.string() + "': expected `qw qx qy qz tx ty tz`");
  p.rotation = normalized(p.rotation);
  return p;
}

// ---------------------------------------------------------------- key = value

// Flat configuration: one `key = value` per line, `#` starts a comment,
// values may be double-quoted. Every key must be consumed by the reader.
class KeyValues {
 public:
  static KeyValues parse(std::istream& is, const std::string& origin = "config") {
    KeyValues kv;
    kv.origin_ = origin;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected `key = value`");
      std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
      if (!kv.values_.emplace(key, value).second)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    return kv;
  }

  static KeyValues load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config '" + path.string() + "'");
    return parse(is, path.string());
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_.insert(key);
    return it->second;
  }

  double get_double(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const std::string s = get_string(key, "");
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0' || errno == ERANGE) throw ConfigError(origin_ + ": '" + key + "' is not a number");
    return v;
  }

  long long get_int(const std::string& key, long long fallback) {
    if (!has(key)) return fallback;
    const std::string s = get_string(key, "");
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0' || errno == ERANGE) throw ConfigError(origin_ + ": '" + key + "' is not an integer");
    return v;
  }

  void reject_unused() const {
    for (const auto& [key, value] : values_)
      if (!used_.count(key)) throw ConfigError(origin_ + ": unknown key '" + key + "'");
  }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  std::string origin_;
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

} // namespace besplat
