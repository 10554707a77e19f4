#pragma once

// Continuous camera motion over an exposure window. Three interchangeable
// models share one knot container:
//   Linear        two knots, geodesic interpolation
//   CubicBSpline  cumulative cubic B-spline on uniformly spaced knots
//   Bezier7       eight knots, De Casteljau with geodesic interpolation
// Knots are camera-to-world poses.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "besplat/errors.hpp"
#include "besplat/jet.hpp"
#include "besplat/se3.hpp"

namespace besplat {

enum class TrajectoryModel { Linear, CubicBSpline, Bezier7 };

inline const char* to_string(TrajectoryModel m) {
  switch (m) {
  case TrajectoryModel::Linear: return "linear";
  case TrajectoryModel::CubicBSpline: return "cubic";
  case TrajectoryModel::Bezier7: return "bezier7";
  }
  return "?";
}

inline TrajectoryModel parse_model(const std::string& s) {
  if (s == "linear") return TrajectoryModel::Linear;
  if (s == "cubic" || s == "cubic_bspline" || s == "bspline") return TrajectoryModel::CubicBSpline;
  if (s == "bezier7" || s == "bezier") return TrajectoryModel::Bezier7;
  throw InvalidArgument("unknown trajectory model '" + s + "'");
}

struct CumulativeBasis {
  std::array<double, 4> b{};
};

struct Trajectory {
  TrajectoryModel model = TrajectoryModel::Bezier7;
  std::vector<SE3Pose> knots;
  double t0 = 0.0;
  double dt = 0.1;
  double exposure_start = 0.0;
  double exposure_end = 0.1;

  double exposure_length() const { return exposure_end - exposure_start; }
  // Maps normalized exposure time u in [0,1] to seconds.
  double time_at(double u) const { return exposure_start + u * exposure_length(); }
};

namespace detail {

// M * [1 u u^2 u^3] without the range check; u = 1 is allowed so the last
// segment can be closed at the end of knot coverage.
inline std::array<double, 4> basis_unchecked(double u) {
  const double u2 = u * u, u3 = u2 * u;
  return {1.0, (5.0 + 3.0 * u - 3.0 * u2 + u3) / 6.0, (1.0 + 3.0 * u + 3.0 * u2 - 2.0 * u3) / 6.0,
          u3 / 6.0};
}

template <class T>
BasicPose<T> geodesic(const BasicPose<T>& a, const BasicPose<T>& b, double u) {
  const BasicTwist<T> d = log(compose(inverse(a), b));
  return compose(a, exp(T(u) * d));
}

inline std::size_t required_knots(TrajectoryModel m) {
  switch (m) {
  case TrajectoryModel::Linear: return 2;
  case TrajectoryModel::CubicBSpline: return 4;
  case TrajectoryModel::Bezier7: return 8;
  }
  return 0;
}

struct SplineParam {
  std::size_t segment;
  double u;
};

inline SplineParam spline_param(const Trajectory& traj, double t) {
  const std::size_t n = traj.knots.size();
  if (n < 4) throw InvalidArgument("cubic B-spline needs at least 4 knots");
  const double segments = static_cast<double>(n - 3);
  const double s = (t - traj.t0) / traj.dt;
  const double tol = 1e-9;
  if (!(s >= -tol && s <= segments + tol)) throw RangeError("time outside cubic B-spline knot coverage");
  const double clamped = std::clamp(s, 0.0, segments);
  auto k = static_cast<std::size_t>(std::floor(clamped));
  double u = clamped - static_cast<double>(k);
  if (k >= n - 3) { // end of coverage closes the last segment at u = 1
    k = n - 4;
    u = 1.0;
  }
  return {k, u};
}

template <class T>
BasicPose<T> cubic_eval(std::span<const BasicPose<T>> knots, SplineParam p) {
  const auto b = basis_unchecked(p.u);
  BasicPose<T> pose = knots[p.segment];
  for (std::size_t j = 0; j < 3; ++j) {
    const BasicTwist<T> omega = log(compose(inverse(knots[p.segment + j]), knots[p.segment + j + 1]));
    pose = compose(pose, exp(T(b[j + 1]) * omega));
  }
  return pose;
}

template <class T>
BasicPose<T> bezier_eval(std::span<const BasicPose<T>> knots, double u) {
  std::array<BasicPose<T>, 8> level;
  for (std::size_t i = 0; i < 8; ++i) level[i] = knots[i];
  if (u == 0.0) return level[0];
  if (u == 1.0) return level[7];
  for (std::size_t width = 7; width > 0; --width)
    for (std::size_t i = 0; i < width; ++i) level[i] = geodesic(level[i], level[i + 1], u);
  return level[0];
}

template <class T>
BasicPose<T> linear_eval(std::span<const BasicPose<T>> knots, double u) {
  if (u == 0.0) return knots[0];
  if (u == 1.0) return knots[1];
  return geodesic(knots[0], knots[1], u);
}

inline double normalized_time(const Trajectory& traj, double t) {
  const double u = (t - traj.exposure_start) / traj.exposure_length();
  const double tol = 1e-9;
  if (!(u >= -tol && u <= 1.0 + tol)) throw RangeError("time outside exposure window");
  return std::clamp(u, 0.0, 1.0);
}

// Knots of the model that influence the pose at time t.
inline std::pair<std::size_t, std::size_t> active_knots(const Trajectory& traj, double t) {
  if (traj.model == TrajectoryModel::CubicBSpline) {
    const auto p = spline_param(traj, t);
    return {p.segment, p.segment + 4};
  }
  return {0, traj.knots.size()};
}

template <class T>
BasicPose<T> evaluate(const Trajectory& traj, std::span<const BasicPose<T>> knots, double t) {
  switch (traj.model) {
  case TrajectoryModel::CubicBSpline: return cubic_eval(knots, spline_param(traj, t));
  case TrajectoryModel::Bezier7: return bezier_eval(knots, normalized_time(traj, t));
  case TrajectoryModel::Linear: return linear_eval(knots, normalized_time(traj, t));
  }
  throw InvalidArgument("unknown trajectory model");
}

} // namespace detail

inline void validate(const Trajectory& traj) {
  const std::size_t need = detail::required_knots(traj.model);
  if (traj.model == TrajectoryModel::CubicBSpline ? traj.knots.size() < need : traj.knots.size() != need)
    throw InvalidArgument(std::string("trajectory: wrong knot count for model ") + to_string(traj.model));
  if (!(traj.dt > 0.0)) throw InvalidArgument("trajectory: dt must be positive");
  if (!(traj.exposure_end > traj.exposure_start)) throw InvalidArgument("trajectory: empty exposure interval");
  if (traj.model == TrajectoryModel::CubicBSpline) {
    const double covered = traj.t0 + static_cast<double>(traj.knots.size() - 3) * traj.dt;
    const double tol = 1e-9 * traj.dt;
    if (traj.exposure_start < traj.t0 - tol || traj.exposure_end > covered + tol)
      throw InvalidArgument("trajectory: exposure not covered by knots");
  }
}

// All knots start at the same pose; cubic_knots applies to the B-spline only.
inline Trajectory make_trajectory(TrajectoryModel model, const SE3Pose& init, double exposure_start,
                                  double exposure_end, std::size_t cubic_knots = 4) {
  Trajectory traj;
  traj.model = model;
  traj.exposure_start = exposure_start;
  traj.exposure_end = exposure_end;
  traj.t0 = exposure_start;
  std::size_t n = detail::required_knots(model);
  if (model == TrajectoryModel::CubicBSpline) {
    if (cubic_knots < 4) throw InvalidArgument("cubic B-spline needs at least 4 knots");
    n = cubic_knots;
    traj.dt = (exposure_end - exposure_start) / static_cast<double>(n - 3);
  } else {
    traj.dt = exposure_end - exposure_start;
  }
  traj.knots.assign(n, init);
  validate(traj);
  return traj;
}

inline CumulativeBasis cumulative_basis(double u) {
  if (!(u >= 0.0 && u < 1.0)) throw RangeError("cumulative_basis: u outside [0,1)");
  return {detail::basis_unchecked(u)};
}

inline SE3Pose eval_cubic_bspline(const Trajectory& traj, double t) {
  if (traj.model != TrajectoryModel::CubicBSpline) throw InvalidArgument("eval_cubic_bspline: wrong model");
  return detail::cubic_eval<double>(traj.knots, detail::spline_param(traj, t));
}

inline SE3Pose eval_bezier7(const Trajectory& traj, double u) {
  if (traj.knots.size() != 8) throw InvalidArgument("eval_bezier7: exactly 8 knots required");
  if (!(u >= 0.0 && u <= 1.0)) throw RangeError("eval_bezier7: u outside [0,1]");
  return detail::bezier_eval<double>(traj.knots, u);
}

inline SE3Pose eval_linear(const Trajectory& traj, double u) {
  if (traj.knots.size() != 2) throw InvalidArgument("eval_linear: exactly 2 knots required");
  if (!(u >= 0.0 && u <= 1.0)) throw RangeError("eval_linear: u outside [0,1]");
  return detail::linear_eval<double>(traj.knots, u);
}

// Pose at absolute time t (seconds).
inline SE3Pose pose_at(const Trajectory& traj, double t) {
  return detail::evaluate<double>(traj, traj.knots, t);
}

// n uniformly spaced times over the exposure, endpoints included.
inline std::vector<double> sample_times(const Trajectory& traj, std::size_t n) {
  if (n < 2) throw InvalidArgument("sample_exposure: need at least 2 samples");
  std::vector<double> ts(n);
  for (std::size_t i = 0; i < n; ++i)
    ts[i] = traj.time_at(static_cast<double>(i) / static_cast<double>(n - 1));
  ts.back() = traj.exposure_end;
  return ts;
}

inline std::vector<SE3Pose> sample_exposure(const Trajectory& traj, std::size_t n) {
  std::vector<SE3Pose> poses;
  poses.reserve(n);
  for (double t : sample_times(traj, n)) poses.push_back(pose_at(traj, t));
  return poses;
}

using Matrix6d = Eigen::Matrix<double, 6, 6>;

// Jacobians of the pose at time t with respect to right-perturbations of each
// knot: with knot_k <- knot_k * exp(d), pose(t) <- pose(t) * exp(J_k d + O(d^2)).
// Computed by forward-mode dual numbers; knots outside the active window get
// zero matrices.
inline std::vector<Matrix6d> knot_jacobians(const Trajectory& traj, double t) {
  using J6 = Jet<6>;
  const std::size_t n = traj.knots.size();
  std::vector<Matrix6d> out(n, Matrix6d::Zero());
  const SE3Pose base = pose_at(traj, t);
  const BasicPose<J6> base_inv = lift<J6>(inverse(base));
  std::vector<BasicPose<J6>> knots(n);
  for (std::size_t i = 0; i < n; ++i) knots[i] = lift<J6>(traj.knots[i]);

  const auto [first, last] = detail::active_knots(traj, t);
  for (std::size_t k = first; k < last; ++k) {
    BasicTwist<J6> delta;
    for (int d = 0; d < 6; ++d) delta[d] = J6::variable(0.0, d);
    const BasicPose<J6> saved = knots[k];
    knots[k] = compose(saved, exp(delta));
    const BasicPose<J6> pose = detail::evaluate<J6>(traj, knots, t);
    const BasicTwist<J6> eps = log(compose(base_inv, pose));
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 6; ++c) out[k](r, c) = eps[r].v[c];
    knots[k] = saved;
  }
  return out;
}

// Plain-text serialization: `model`, `t0`, `dt`, `exposure` records, then one
// knot per line as `qw qx qy qz tx ty tz` with 17 significant digits.
inline void write_trajectory(std::ostream& os, const Trajectory& traj) {
  char buf[512];
  os << "model " << to_string(traj.model) << "\n";
  std::snprintf(buf, sizeof buf, "t0 %.17g\ndt %.17g\nexposure %.17g %.17g\n", traj.t0, traj.dt,
                traj.exposure_start, traj.exposure_end);
  os << buf;
  for (const SE3Pose& k : traj.knots) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", k.rotation.w, k.rotation.x,
                  k.rotation.y, k.rotation.z, k.translation.x, k.translation.y, k.translation.z);
    os << buf;
  }
}

inline Trajectory read_trajectory(std::istream& is) {
  Trajectory traj;
  traj.knots.clear();
  bool have_model = false, have_t0 = false, have_dt = false, have_exposure = false;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "model") {
      std::string m;
      ls >> m;
      traj.model = parse_model(m);
      have_model = true;
    } else if (key == "t0") {
      have_t0 = static_cast<bool>(ls >> traj.t0);
    } else if (key == "dt") {
      have_dt = static_cast<bool>(ls >> traj.dt);
    } else if (key == "exposure") {
      have_exposure = static_cast<bool>(ls >> traj.exposure_start >> traj.exposure_end);
    } else {
      std::istringstream ks(line);
      SE3Pose k;
      if (!(ks >> k.rotation.w >> k.rotation.x >> k.rotation.y >> k.rotation.z >> k.translation.x >>
            k.translation.y >> k.translation.z))
        throw IoError("trajectory: malformed knot line '" + line + "'");
      traj.knots.push_back(k);
    }
  }
  if (!(have_model && have_t0 && have_dt && have_exposure)) throw IoError("trajectory: missing header record");
  validate(traj);
  return traj;
}

} // namespace besplat
