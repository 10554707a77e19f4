#pragma once

// Random generators and finite-difference helpers shared by the test suites.
// Nothing here calls into the code paths it is used to check.

#include <cmath>
#include <numbers>
#include <random>

#include "besplat/renderer.hpp"
#include "besplat/se3.hpp"

namespace besplat::testing {

inline Vector3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    Vector3 v{n(rng), n(rng), n(rng)};
    const double len = std::sqrt(dot(v, v));
    if (len > 1e-3) return (1.0 / len) * v;
  }
}

inline Twist random_twist(std::mt19937_64& rng, double max_angle, double max_trans) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Twist xi;
  xi.phi = (max_angle * u(rng)) * random_unit(rng);
  xi.rho = (max_trans * u(rng)) * random_unit(rng);
  return xi;
}

inline Quaternion random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return normalized(Quaternion{n(rng), n(rng), n(rng), n(rng)});
}

inline SE3Pose random_pose(std::mt19937_64& rng, double max_trans = 2.0) {
  std::uniform_real_distribution<double> u(-max_trans, max_trans);
  SE3Pose p;
  p.rotation = random_quat(rng);
  p.translation = {u(rng), u(rng), u(rng)};
  return p;
}

// Rotation angle of a^-1 b plus translation distance; an oracle-free pose metric.
inline double pose_distance(const SE3Pose& a, const SE3Pose& b) {
  const Quaternion d = conjugate(a.rotation) * b.rotation;
  const double n = std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
  const double angle = 2.0 * std::atan2(n, std::abs(d.w));
  const Vector3 dt = a.translation - b.translation;
  return angle + std::sqrt(dot(dt, dt));
}

inline bool same_pose(const SE3Pose& a, const SE3Pose& b) {
  return a.rotation.w == b.rotation.w && a.rotation.x == b.rotation.x && a.rotation.y == b.rotation.y &&
         a.rotation.z == b.rotation.z && a.translation.x == b.translation.x &&
         a.translation.y == b.translation.y && a.translation.z == b.translation.z;
}

inline double rel_error(double a, double b) {
  const double m = std::max(std::abs(a), std::abs(b));
  return m == 0.0 ? 0.0 : std::abs(a - b) / m;
}

// Small scene in front of an identity camera, sized for FD gradient checks.
inline Scene random_fd_scene(std::mt19937_64& rng, int count) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Scene scene;
  for (int i = 0; i < count; ++i) {
    const Eigen::Vector3d mean(-0.6 + 1.2 * u(rng), -0.6 + 1.2 * u(rng), 3.5 + 1.0 * u(rng));
    const Eigen::Vector3d scale(0.08 + 0.25 * u(rng), 0.08 + 0.25 * u(rng), 0.08 + 0.25 * u(rng));
    const Eigen::Vector3d color(u(rng), u(rng), u(rng));
    scene.push_back(Gaussian::make(mean, random_quat(rng), scale, 0.3 + 0.65 * u(rng), color));
  }
  return scene;
}

inline Camera fd_camera() { return {20.0, 20.0, 7.5, 7.5, 16, 16}; }

} // namespace besplat::testing
