#pragma once

// Ground-truth generator for closed-loop experiments: random splat scenes,
// smooth random camera motion, the blurry observation, frame-differencing
// events, sharp references and a perturbed starting point for the solver.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "besplat/errors.hpp"
#include "besplat/image.hpp"
#include "besplat/io.hpp"
#include "besplat/parallel.hpp"
#include "besplat/renderer.hpp"
#include "besplat/sensor.hpp"
#include "besplat/trajectory.hpp"

namespace besplat {

namespace detail {

// Streams are keyed by (seed, purpose) so adding a draw in one generator never
// shifts another generator's values.
inline std::mt19937_64 oracle_rng(std::uint64_t seed, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose};
  return std::mt19937_64(seq);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

// Box-Muller on the portable uniform above.
inline double normal(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform(rng, 0.0, 1.0), u2 = uniform(rng, 0.0, 1.0);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline Vector3 unit_vector(std::mt19937_64& rng) {
  for (;;) {
    Vector3 v{normal(rng), normal(rng), normal(rng)};
    const double n = std::sqrt(dot(v, v));
    if (n > 1e-6) return (1.0 / n) * v;
  }
}

inline Quaternion random_rotation(std::mt19937_64& rng) {
  return normalized(Quaternion{normal(rng), normal(rng), normal(rng), normal(rng)});
}

} // namespace detail

// Splats live in a box centred at `center`, spanning `extent` across x and y
// at 80% and along the view axis at 50%.
struct SceneBox {
  Eigen::Vector3d center = Eigen::Vector3d(0.0, 0.0, 4.0);
  double extent = 2.0;
};

inline Scene make_toy_scene(std::uint64_t seed, int n_gaussians, const SceneBox& box = {}) {
  if (n_gaussians < 1) throw InvalidArgument("make_toy_scene: need at least one splat");
  if (!(box.extent > 0.0)) throw InvalidArgument("make_toy_scene: extent must be positive");
  std::mt19937_64 rng = detail::oracle_rng(seed, 1);
  const Eigen::Vector3d half = box.extent * Eigen::Vector3d(0.4, 0.4, 0.25);
  Scene scene;
  for (int i = 0; i < n_gaussians; ++i) {
    Eigen::Vector3d mean, scale, color;
    for (int k = 0; k < 3; ++k) mean[k] = box.center[k] + detail::uniform(rng, -half[k], half[k]);
    const Quaternion q = detail::random_rotation(rng);
    for (int k = 0; k < 3; ++k) scale[k] = box.extent * detail::uniform(rng, 0.01, 0.1);
    const double opacity = detail::uniform(rng, 0.3, 0.95);
    for (int k = 0; k < 3; ++k) color[k] = detail::uniform(rng, 0.0, 1.0);
    scene.push_back(Gaussian::make(mean, q, scale, opacity, color));
  }
  return scene;
}

struct MotionMagnitude {
  double rotation = 5.0 * std::numbers::pi / 180.0; // radians
  double translation = 0.1;                          // scene units
};

// Largest rotation angle and translation distance of any trajectory pose
// relative to the pose at exposure start, on a dense time grid.
inline std::pair<double, double> motion_extent(const Trajectory& traj, std::size_t samples = 101) {
  const SE3Pose start_inv = inverse(pose_at(traj, traj.exposure_start));
  double rot = 0.0, trans = 0.0;
  for (double t : sample_times(traj, samples)) {
    const SE3Pose rel = compose(start_inv, pose_at(traj, t));
    rot = std::max(rot, rotation_angle(rel));
    trans = std::max(trans, std::sqrt(dot(rel.translation, rel.translation)));
  }
  return {rot, trans};
}

// Knots sample a curved tangent-space path xi(s) = a (s - 1/2) + b 4 s (1 - s)
// around `center`: Bezier7 at s = i/7, linear at s = 0, 1, the cubic spline at
// s = -1 .. 2 so its single segment spans s in [0, 1]. The path is shrunk until
// its motion relative to the start pose fits the requested magnitude.
inline Trajectory make_gt_trajectory(std::uint64_t seed, TrajectoryModel model, const MotionMagnitude& mag,
                                     const SE3Pose& center = {}, double exposure_start = 0.0,
                                     double exposure_end = 0.1) {
  if (!(mag.rotation >= 0.0 && mag.translation >= 0.0)) throw InvalidArgument("make_gt_trajectory: negative magnitude");
  std::mt19937_64 rng = detail::oracle_rng(seed, 2);
  Twist a, b;
  a.phi = mag.rotation * detail::unit_vector(rng);
  a.rho = mag.translation * detail::unit_vector(rng);
  b.phi = (0.6 * mag.rotation) * detail::unit_vector(rng);
  b.rho = (0.6 * mag.translation) * detail::unit_vector(rng);

  std::vector<double> params;
  if (model == TrajectoryModel::Linear) params = {0.0, 1.0};
  if (model == TrajectoryModel::CubicBSpline) params = {-1.0, 0.0, 1.0, 2.0};
  if (model == TrajectoryModel::Bezier7)
    for (int i = 0; i < 8; ++i) params.push_back(i / 7.0);

  Trajectory traj = make_trajectory(model, center, exposure_start, exposure_end);
  for (double shrink = 1.0;; shrink *= 0.9) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double s = params[i], ca = shrink * (s - 0.5), cb = shrink * 4.0 * s * (1.0 - s);
      Twist xi;
      for (int k = 0; k < 6; ++k) xi[k] = ca * a[k] + cb * b[k];
      traj.knots[i] = compose(center, exp(xi));
    }
    const auto [rot, trans] = motion_extent(traj);
    if (rot <= mag.rotation && trans <= mag.translation) break;
  }
  return traj;
}

// Per-pixel threshold crossings of a sampled log-intensity signal. The
// reference starts at the first sample and moves by one threshold per event;
// timestamps interpolate linearly between samples and are rounded to 1 ns.
inline void emit_pixel_events(const std::vector<double>& log_values, const std::vector<double>& times, double c,
                              int x, int y, std::vector<Event>& out) {
  if (log_values.size() != times.size() || times.size() < 2) throw InvalidArgument("emit_pixel_events: need >= 2 samples");
  double ref = log_values.front();
  const double lo = times.front(), hi = times.back();
  for (std::size_t k = 1; k < times.size(); ++k) {
    const double l0 = log_values[k - 1], l1 = log_values[k];
    for (;;) {
      int polarity = 0;
      if (l1 - ref >= c) polarity = 1;
      else if (ref - l1 >= c) polarity = -1;
      if (!polarity) break;
      const double level = ref + polarity * c;
      const double f = (l1 == l0) ? 1.0 : std::clamp((level - l0) / (l1 - l0), 0.0, 1.0);
      double t = times[k - 1] + f * (times[k] - times[k - 1]);
      t = std::clamp(std::round(t * 1e9) / 1e9, lo + 1e-9, hi);
      out.push_back({t, x, y, polarity});
      ref = level;
    }
  }
}

inline EventStream generate_event_stream(const Scene& scene, const Trajectory& traj, const Camera& cam,
                                         const Eigen::Vector3d& background, double threshold, int n_steps,
                                         const RenderOptions& opt = {}) {
  if (n_steps < 2) throw InvalidArgument("generate_event_stream: n_steps must be at least 2");
  if (!(threshold > 0.0)) throw InvalidArgument("generate_event_stream: threshold must be positive");
  const std::vector<double> times = sample_times(traj, static_cast<std::size_t>(n_steps));
  std::vector<Image> frames(times.size());
  parallel_for(times.size(), [&](std::size_t i) {
    frames[i] = render_gray(scene, pose_at(traj, times[i]), cam, background, opt);
  });
  EventStream s;
  s.width = cam.width;
  s.height = cam.height;
  s.threshold = threshold;
  std::vector<double> logs(times.size());
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      for (std::size_t k = 0; k < times.size(); ++k) logs[k] = std::log(frames[k].at(x, y) + kLogEps);
      emit_pixel_events(logs, times, threshold, x, y, s.events);
    }
  std::stable_sort(s.events.begin(), s.events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
  return s;
}

// Ground-truth pose rotated by exactly `rot_deg` about a random axis and
// shifted by exactly `trans_frac * extent` in a random direction.
inline SE3Pose perturb_init(const SE3Pose& gt, std::uint64_t seed, double rot_deg, double trans_frac,
                            double extent = 1.0) {
  std::mt19937_64 rng = detail::oracle_rng(seed, 3);
  const Vector3 axis = detail::unit_vector(rng), dir = detail::unit_vector(rng);
  Twist spin;
  spin.phi = (rot_deg * std::numbers::pi / 180.0) * axis;
  SE3Pose p = gt;
  if (rot_deg != 0.0) p.rotation = normalized(gt.rotation * exp(spin).rotation);
  if (trans_frac != 0.0) p.translation = gt.translation + (trans_frac * extent) * dir;
  return p;
}

// ---------------------------------------------------------------- datasets

struct DatasetConfig {
  std::uint64_t seed = 0;
  int width = 64;
  int height = 64;
  double focal = 80.0;
  int n_gaussians = 50;
  double extent = 2.0;
  double depth = 4.0;
  TrajectoryModel model = TrajectoryModel::Bezier7;
  double motion_rot_deg = 5.0;
  double motion_trans_frac = 0.05;
  double exposure = 0.1;
  double threshold = 0.125;
  int n_steps = 200;
  int blur_samples = 19;
  int sharp_count = 5;
  double init_rot_deg = 2.0;
  double init_trans_frac = 0.02;
  double point_noise_frac = 0.02;
  double background = 0.5;

  void validate() const {
    if (width < 1 || height < 1) throw ConfigError("dataset: image size must be positive");
    if (!(focal > 0.0)) throw ConfigError("dataset: focal must be positive");
    if (n_gaussians < 1) throw ConfigError("dataset: n_gaussians must be at least 1");
    if (!(extent > 0.0 && depth > 0.0)) throw ConfigError("dataset: extent and depth must be positive");
    if (!(motion_rot_deg >= 0.0 && motion_trans_frac >= 0.0)) throw ConfigError("dataset: negative motion");
    if (!(exposure > 0.0)) throw ConfigError("dataset: exposure must be positive");
    if (!(threshold > 0.0)) throw ConfigError("dataset: threshold must be positive");
    if (n_steps < 2) throw ConfigError("dataset: n_steps must be at least 2");
    if (blur_samples < 1) throw ConfigError("dataset: blur_samples must be at least 1");
    if (sharp_count < 2) throw ConfigError("dataset: sharp_count must be at least 2");
    if (!(init_rot_deg >= 0.0 && init_trans_frac >= 0.0 && point_noise_frac >= 0.0))
      throw ConfigError("dataset: negative perturbation");
    if (!(background >= 0.0 && background <= 1.0)) throw ConfigError("dataset: background must lie in [0, 1]");
  }

  Camera camera() const { return {focal, focal, 0.5 * (width - 1), 0.5 * (height - 1), width, height}; }
};

struct InitPoint {
  Eigen::Vector3d position;
  Eigen::Vector3d color;
};

struct DatasetMeta {
  std::uint64_t seed = 0;
  double exposure_start = 0.0;
  double exposure_end = 0.1;
  double threshold = 0.125;
  int n_steps = 200;
  int blur_samples = 19;
  int sharp_count = 5;
  double extent = 2.0;
  double background = 0.5;
};

struct ToyDataset {
  Scene scene;
  Trajectory traj;
  Camera camera;
  Image blurry;
  EventStream events;
  std::vector<Image> sharp;
  SE3Pose init_pose;
  std::vector<InitPoint> init_points;
  DatasetMeta meta;

  Eigen::Vector3d background() const { return Eigen::Vector3d::Constant(meta.background); }
  std::vector<double> sharp_times() const { return sample_times(traj, sharp.size()); }
};

inline ToyDataset generate_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  ToyDataset d;
  d.meta = {cfg.seed, 0.0, cfg.exposure, cfg.threshold, cfg.n_steps, cfg.blur_samples, cfg.sharp_count, cfg.extent,
            cfg.background};
  d.camera = cfg.camera();
  SceneBox box;
  box.center = Eigen::Vector3d(0.0, 0.0, cfg.depth);
  box.extent = cfg.extent;
  d.scene = make_toy_scene(cfg.seed, cfg.n_gaussians, box);
  MotionMagnitude mag;
  mag.rotation = cfg.motion_rot_deg * std::numbers::pi / 180.0;
  mag.translation = cfg.motion_trans_frac * cfg.extent;
  d.traj = make_gt_trajectory(cfg.seed, cfg.model, mag, SE3Pose{}, 0.0, cfg.exposure);

  const Eigen::Vector3d bg = d.background();
  d.blurry = synth_blur(d.scene, d.traj, d.camera, bg, static_cast<std::size_t>(cfg.blur_samples));
  d.events = generate_event_stream(d.scene, d.traj, d.camera, bg, cfg.threshold, cfg.n_steps);
  for (double t : sample_times(d.traj, static_cast<std::size_t>(cfg.sharp_count)))
    d.sharp.push_back(rasterize(d.scene, pose_at(d.traj, t), d.camera, bg).image);

  const double mid = 0.5 * (d.traj.exposure_start + d.traj.exposure_end);
  d.init_pose = perturb_init(pose_at(d.traj, mid), cfg.seed, cfg.init_rot_deg, cfg.init_trans_frac, cfg.extent);
  std::mt19937_64 rng = detail::oracle_rng(cfg.seed, 4);
  const double sigma = cfg.point_noise_frac * cfg.extent;
  for (const Gaussian& g : d.scene) {
    InitPoint p;
    for (int k = 0; k < 3; ++k) p.position[k] = g.mean[k] + sigma * detail::normal(rng);
    p.color = g.color;
    d.init_points.push_back(p);
  }
  return d;
}

inline std::string sharp_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sharp_%03zu.pfm", i);
  return buf;
}

inline void write_meta(const std::filesystem::path& path, const DatasetMeta& m) {
  std::ofstream os = open_output(path);
  os << "seed = " << m.seed << "\n"
     << "exposure_start = " << format_double(m.exposure_start) << "\n"
     << "exposure_end = " << format_double(m.exposure_end) << "\n"
     << "threshold = " << format_double(m.threshold) << "\n"
     << "n_steps = " << m.n_steps << "\n"
     << "blur_samples = " << m.blur_samples << "\n"
     << "sharp_count = " << m.sharp_count << "\n"
     << "extent = " << format_double(m.extent) << "\n"
     << "background = " << format_double(m.background) << "\n";
  check_written(os, path);
}

inline DatasetMeta read_meta(const std::filesystem::path& path) {
  KeyValues kv = KeyValues::load(path);
  DatasetMeta m;
  m.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  m.exposure_start = kv.get_double("exposure_start", m.exposure_start);
  m.exposure_end = kv.get_double("exposure_end", m.exposure_end);
  m.threshold = kv.get_double("threshold", m.threshold);
  m.n_steps = static_cast<int>(kv.get_int("n_steps", m.n_steps));
  m.blur_samples = static_cast<int>(kv.get_int("blur_samples", m.blur_samples));
  m.sharp_count = static_cast<int>(kv.get_int("sharp_count", m.sharp_count));
  m.extent = kv.get_double("extent", m.extent);
  m.background = kv.get_double("background", m.background);
  kv.reject_unused();
  return m;
}

inline void write_init_points(const std::filesystem::path& path, const std::vector<InitPoint>& pts) {
  std::ofstream os = open_output(path);
  for (const InitPoint& p : pts) {
    for (int k = 0; k < 3; ++k) os << format_double(p.position[k]) << " ";
    for (int k = 0; k < 3; ++k) os << format_double(p.color[k]) << (k < 2 ? " " : "\n");
  }
  check_written(os, path);
}

inline std::vector<InitPoint> read_init_points(const std::filesystem::path& path) {
  std::ifstream is = open_input(path);
  std::vector<InitPoint> pts;
  std::string line;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    InitPoint p;
    if (!(ls >> p.position[0] >> p.position[1] >> p.position[2] >> p.color[0] >> p.color[1] >> p.color[2]))
      throw IoError("'" + path.string() + "': expected `x y z r g b`");
    pts.push_back(p);
  }
  return pts;
}

// Layout: blurry.pfm, events.txt, camera.txt, traj_gt.txt, sharp_NNN.pfm,
// init_pose.txt, init_points.txt, meta.txt and scene_gt.txt.
inline void save_dataset(const std::filesystem::path& dir, const ToyDataset& d) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
  write_pfm((dir / "blurry.pfm").string(), d.blurry);
  write_events((dir / "events.txt").string(), d.events);
  write_camera(dir / "camera.txt", d.camera);
  {
    std::ofstream os = open_output(dir / "traj_gt.txt");
    write_trajectory(os, d.traj);
    check_written(os, dir / "traj_gt.txt");
  }
  for (std::size_t i = 0; i < d.sharp.size(); ++i) write_pfm((dir / sharp_name(i)).string(), d.sharp[i]);
  write_pose(dir / "init_pose.txt", d.init_pose);
  write_init_points(dir / "init_points.txt", d.init_points);
  write_meta(dir / "meta.txt", d.meta);
  write_scene(dir / "scene_gt.txt", d.scene);
}

inline ToyDataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("dataset directory '" + dir.string() + "' not found");
  const char* required[] = {"blurry.pfm", "events.txt", "camera.txt", "traj_gt.txt", "init_pose.txt",
                            "init_points.txt", "meta.txt"};
  for (const char* name : required)
    if (!std::filesystem::exists(dir / name)) throw ConfigError("dataset is missing '" + std::string(name) + "'");
  ToyDataset d;
  d.meta = read_meta(dir / "meta.txt");
  d.camera = read_camera(dir / "camera.txt");
  d.blurry = read_pfm((dir / "blurry.pfm").string());
  d.events = read_events((dir / "events.txt").string());
  {
    std::ifstream is = open_input(dir / "traj_gt.txt");
    d.traj = read_trajectory(is);
  }
  for (int i = 0; i < d.meta.sharp_count; ++i) {
    const auto p = dir / sharp_name(static_cast<std::size_t>(i));
    if (std::filesystem::exists(p)) d.sharp.push_back(read_pfm(p.string()));
  }
  d.init_pose = read_pose(dir / "init_pose.txt");
  d.init_points = read_init_points(dir / "init_points.txt");
  if (std::filesystem::exists(dir / "scene_gt.txt")) d.scene = read_scene(dir / "scene_gt.txt");
  if (d.blurry.width != d.camera.width || d.blurry.height != d.camera.height || d.blurry.channels != 3)
    throw ConfigError("dataset: blurry image does not match camera.txt");
  if (d.init_points.empty()) throw ConfigError("dataset: init_points.txt is empty");
  return d;
}

} // namespace besplat
