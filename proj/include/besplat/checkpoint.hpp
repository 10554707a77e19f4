#pragma once

// Training checkpoints: everything needed to resume bit-exactly or to render.
//
//   scene.txt   splats (io.hpp format)
//   traj.txt    trajectory knots
//   camera.txt  intrinsics
//   state.txt   iteration counters and background
//   optim.txt   Adam moments for both parameter groups
//   loss.csv    loss history so far

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "besplat/errors.hpp"
#include "besplat/io.hpp"
#include "besplat/optimizer.hpp"

namespace besplat {

struct Checkpoint {
  TrainState state;
  Camera camera;
  Eigen::Vector3d background = Eigen::Vector3d::Constant(0.5);
};

inline void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history) {
  std::ofstream os = open_output(path);
  os << "iter,L_p,L_e,L_total,pose_lr\n";
  for (const LossRecord& r : history)
    os << r.iter << "," << format_double(r.photometric) << "," << format_double(r.event) << ","
       << format_double(r.total) << "," << format_double(r.pose_lr) << "\n";
  check_written(os, path);
}

inline std::vector<LossRecord> read_loss_csv(const std::filesystem::path& path) {
  std::ifstream is = open_input(path);
  std::string line;
  std::getline(is, line);
  std::vector<LossRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    LossRecord r;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &r.iter, &r.photometric, &r.event, &r.total, &r.pose_lr) != 5)
      throw IoError("'" + path.string() + "': malformed row '" + line + "'");
    out.push_back(r);
  }
  return out;
}

namespace detail {

inline void write_adam(std::ostream& os, const char* name, const Adam& a) {
  os << name << " " << a.step << " " << a.m.size() << "\n";
  for (std::size_t i = 0; i < a.m.size(); ++i) os << format_double(a.m[i]) << " " << format_double(a.v[i]) << "\n";
}

inline Adam read_adam(std::istream& is, const char* name, const std::filesystem::path& path) {
  std::string tag;
  std::size_t n = 0;
  Adam a;
  if (!(is >> tag >> a.step >> n) || tag != name) throw IoError("'" + path.string() + "': missing " + name);
  a.m.resize(n);
  a.v.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    if (!(is >> a.m[i] >> a.v[i])) throw IoError("'" + path.string() + "': truncated " + name);
  return a;
}

} // namespace detail

inline void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
  const TrainState& s = ck.state;
  write_scene(dir / "scene.txt", s.scene);
  {
    std::ofstream os = open_output(dir / "traj.txt");
    write_trajectory(os, s.traj);
    check_written(os, dir / "traj.txt");
  }
  write_camera(dir / "camera.txt", ck.camera);
  {
    std::ofstream os = open_output(dir / "state.txt");
    os << "iter = " << s.iter << "\n"
       << "event_evaluations = " << s.event_evaluations << "\n"
       << "skipped_steps = " << s.optim.skipped_steps << "\n"
       << "background_r = " << format_double(ck.background.x()) << "\n"
       << "background_g = " << format_double(ck.background.y()) << "\n"
       << "background_b = " << format_double(ck.background.z()) << "\n";
    check_written(os, dir / "state.txt");
  }
  {
    std::ofstream os = open_output(dir / "optim.txt");
    detail::write_adam(os, "scene", s.optim.scene);
    detail::write_adam(os, "pose", s.optim.pose);
    check_written(os, dir / "optim.txt");
  }
  write_loss_csv(dir / "loss.csv", s.history);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  for (const char* f : {"scene.txt", "traj.txt", "camera.txt", "state.txt", "optim.txt", "loss.csv"})
    if (!std::filesystem::exists(dir / f))
      throw ConfigError("checkpoint '" + dir.string() + "' is missing '" + std::string(f) + "'");
  Checkpoint ck;
  TrainState& s = ck.state;
  s.scene = read_scene(dir / "scene.txt");
  {
    std::ifstream is = open_input(dir / "traj.txt");
    s.traj = read_trajectory(is);
  }
  ck.camera = read_camera(dir / "camera.txt");
  {
    KeyValues kv = KeyValues::load(dir / "state.txt");
    s.iter = static_cast<int>(kv.get_int("iter", 0));
    s.event_evaluations = kv.get_int("event_evaluations", 0);
    s.optim.skipped_steps = kv.get_int("skipped_steps", 0);
    ck.background = {kv.get_double("background_r", 0.5), kv.get_double("background_g", 0.5),
                     kv.get_double("background_b", 0.5)};
    kv.reject_unused();
  }
  {
    std::ifstream is = open_input(dir / "optim.txt");
    s.optim.scene = detail::read_adam(is, "scene", dir / "optim.txt");
    s.optim.pose = detail::read_adam(is, "pose", dir / "optim.txt");
  }
  s.history = read_loss_csv(dir / "loss.csv");
  if (s.optim.scene.m.size() != s.scene.size() * kParamsPerGaussian || s.optim.pose.m.size() != s.traj.knots.size() * 6)
    throw ConfigError("checkpoint '" + dir.string() + "': optimiser state does not match the parameters");
  return ck;
}

} // namespace besplat
