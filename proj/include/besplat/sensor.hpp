#pragma once

// Image and event formation: motion blur as the mean of virtual sharp frames,
// event accumulation over a time window, and the synthetic event image as a
// log-luminance difference between two rendered frames.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "besplat/errors.hpp"
#include "besplat/image.hpp"
#include "besplat/renderer.hpp"
#include "besplat/trajectory.hpp"

namespace besplat {

// Added inside both logarithms of the synthetic event image.
inline constexpr double kLogEps = 1e-5;

struct Event {
  double t = 0.0;
  int x = 0;
  int y = 0;
  int polarity = 1;
};

struct EventStream {
  int width = 0;
  int height = 0;
  double threshold = 0.2;
  std::vector<Event> events;

  void validate() const {
    if (!(threshold > 0.0)) throw InvalidArgument("event stream: threshold must be positive");
    for (std::size_t i = 0; i < events.size(); ++i) {
      const Event& e = events[i];
      if (e.x < 0 || e.x >= width || e.y < 0 || e.y >= height)
        throw InvalidArgument("event stream: pixel outside resolution");
      if (e.polarity != 1 && e.polarity != -1) throw InvalidArgument("event stream: polarity must be +-1");
      if (i > 0 && e.t < events[i - 1].t) throw InvalidArgument("event stream: timestamps decrease");
    }
  }
};

struct EventImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;
  bool normalized = false;

  EventImage() = default;
  EventImage(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0) {}

  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }
};

struct BlurRender {
  Image image;
  std::vector<double> times;
  std::vector<SE3Pose> poses;
  std::vector<RenderTape> tapes;
};

inline std::vector<double> blur_sample_times(const Trajectory& traj, std::size_t n) {
  if (n < 1) throw InvalidArgument("synth_blur: need at least one sample");
  if (n == 1) return {traj.exposure_start};
  return sample_times(traj, n);
}

// Mean of n sharp renders at uniformly spaced exposure times; keeps the tapes.
inline BlurRender render_blur(const Scene& scene, const Trajectory& traj, const Camera& cam,
                              const Eigen::Vector3d& background, std::size_t n, const RenderOptions& opt = {}) {
  BlurRender out;
  out.times = blur_sample_times(traj, n);
  out.image = Image(cam.width, cam.height, 3);
  const double w = 1.0 / static_cast<double>(out.times.size());
  for (double t : out.times) {
    out.poses.push_back(pose_at(traj, t));
    out.tapes.push_back(rasterize(scene, out.poses.back(), cam, background, opt));
    const Image& img = out.tapes.back().image;
    for (std::size_t i = 0; i < img.size(); ++i) out.image.data[i] += w * img.data[i];
  }
  return out;
}

inline Image synth_blur(const Scene& scene, const Trajectory& traj, const Camera& cam,
                        const Eigen::Vector3d& background, std::size_t n, const RenderOptions& opt = {}) {
  return render_blur(scene, traj, cam, background, n, opt).image;
}

// Sum of C * polarity over events with t_a < t <= t_b.
inline EventImage accumulate_events(const EventStream& stream, double t_a, double t_b) {
  if (!(t_a < t_b)) throw InvalidArgument("accumulate_events: interval must satisfy t_a < t_b");
  EventImage out(stream.width, stream.height);
  const auto by_time = [](const Event& e, double t) { return e.t <= t; };
  auto first = std::lower_bound(stream.events.begin(), stream.events.end(), t_a, by_time);
  auto last = std::lower_bound(first, stream.events.end(), t_b, by_time);
  // Integer counts per pixel keep interval additivity exact.
  std::vector<long> counts(out.values.size(), 0);
  for (auto it = first; it != last; ++it)
    counts[static_cast<std::size_t>(it->y) * stream.width + it->x] += it->polarity;
  for (std::size_t i = 0; i < counts.size(); ++i) out.values[i] = stream.threshold * static_cast<double>(counts[i]);
  return out;
}

// Divides by the l2 norm over the whole image; an all-zero image stays zero.
inline EventImage normalize_event_image(const EventImage& e) {
  EventImage out = e;
  out.normalized = true;
  const double n = e.norm();
  if (n == 0.0) return out;
  for (double& v : out.values) v /= n;
  return out;
}

struct EventRender {
  EventImage image; // unnormalized log difference
  Image gray_start, gray_end;
  RenderTape tape_start, tape_end;
  SE3Pose pose_start, pose_end;
};

inline EventRender render_event_image(const Scene& scene, const Trajectory& traj, double t_i, double t_j,
                                      const Camera& cam, const Eigen::Vector3d& background,
                                      const RenderOptions& opt = {}) {
  EventRender r;
  r.pose_start = pose_at(traj, t_i);
  r.pose_end = pose_at(traj, t_j);
  r.tape_start = rasterize(scene, r.pose_start, cam, background, opt);
  r.tape_end = rasterize(scene, r.pose_end, cam, background, opt);
  r.gray_start = to_gray(r.tape_start.image);
  r.gray_end = to_gray(r.tape_end.image);
  r.image = EventImage(cam.width, cam.height);
  for (std::size_t p = 0; p < r.image.values.size(); ++p)
    r.image.values[p] = std::log(r.gray_end.data[p] + kLogEps) - std::log(r.gray_start.data[p] + kLogEps);
  return r;
}

inline EventImage synth_event_image(const Scene& scene, const Trajectory& traj, double t_i, double t_j,
                                    const Camera& cam, const Eigen::Vector3d& background,
                                    const RenderOptions& opt = {}) {
  return render_event_image(scene, traj, t_i, t_j, cam, background, opt).image;
}

// Text format: header `width height threshold`, then `t x y p` per event with
// t printed to 9 decimals.
inline void write_events(const std::string& path, const EventStream& stream) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d %d %.17g\n", stream.width, stream.height, stream.threshold);
  os << buf;
  for (const Event& e : stream.events) {
    std::snprintf(buf, sizeof buf, "%.9f %d %d %d\n", e.t, e.x, e.y, e.polarity);
    os << buf;
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

inline EventStream read_events(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  EventStream s;
  std::string line;
  if (!std::getline(is, line)) throw IoError("'" + path + "': missing header");
  {
    std::istringstream hs(line);
    if (!(hs >> s.width >> s.height >> s.threshold)) throw IoError("'" + path + "': malformed header");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    Event e;
    if (std::sscanf(line.c_str(), "%lf %d %d %d", &e.t, &e.x, &e.y, &e.polarity) != 4)
      throw IoError("'" + path + "': malformed event line '" + line + "'");
    s.events.push_back(e);
  }
  try {
    s.validate();
  } catch (const InvalidArgument& err) {
    throw IoError("'" + path + "': " + err.what());
  }
  return s;
}

} // namespace besplat
