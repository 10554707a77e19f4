#pragma once

// Rigid-body transforms. Rotations are unit quaternions (w, x, y, z), twists
// are (rho, phi) with rho translational and phi rotational. Everything is
// templated on the scalar so trajectory code can run it over Jet<N> to get
// exact knot Jacobians.

#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "besplat/errors.hpp"
#include "besplat/jet.hpp"

namespace besplat {

template <class T>
struct Vec3 {
  T x{}, y{}, z{};

  T& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  const T& operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  friend Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
  friend Vec3 operator*(const T& s, const Vec3& a) { return {s * a.x, s * a.y, s * a.z}; }
  friend Vec3 operator*(const Vec3& a, const T& s) { return s * a; }
};

template <class T>
T dot(const Vec3<T>& a, const Vec3<T>& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

template <class T>
Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <class T>
struct Quat {
  T w{1}, x{}, y{}, z{};

  Vec3<T> vec() const { return {x, y, z}; }

  friend Quat operator*(const Quat& a, const Quat& b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
  }
};

template <class T>
Quat<T> conjugate(const Quat<T>& q) {
  return {q.w, -q.x, -q.y, -q.z};
}

template <class T>
Quat<T> normalized(const Quat<T>& q) {
  using std::sqrt;
  const T inv = T(1) / sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z);
  return {q.w * inv, q.x * inv, q.y * inv, q.z * inv};
}

template <class T>
Vec3<T> rotate(const Quat<T>& q, const Vec3<T>& p) {
  const Vec3<T> v = q.vec();
  const Vec3<T> c = cross(v, p);
  return p + T(2) * q.w * c + T(2) * cross(v, c);
}

template <class T>
struct BasicPose {
  Quat<T> rotation{};
  Vec3<T> translation{};
};

template <class T>
struct BasicTwist {
  Vec3<T> rho{};
  Vec3<T> phi{};

  T& operator[](int i) { return i < 3 ? rho[i] : phi[i - 3]; }
  const T& operator[](int i) const { return i < 3 ? rho[i] : phi[i - 3]; }

  friend BasicTwist operator*(const T& s, const BasicTwist& a) { return {s * a.rho, s * a.phi}; }
  friend BasicTwist operator+(const BasicTwist& a, const BasicTwist& b) {
    return {a.rho + b.rho, a.phi + b.phi};
  }
};

using SE3Pose = BasicPose<double>;
using Twist = BasicTwist<double>;
using Vector3 = Vec3<double>;
using Quaternion = Quat<double>;

// Below this rotation angle (radians) exp/log switch to series expansions.
inline constexpr double kSmallAngle = 1e-6;
// log() refuses rotations this close to pi.
inline constexpr double kBranchMargin = 1e-6;

template <class T>
BasicPose<T> identity_pose() {
  return {};
}

template <class T>
BasicPose<T> compose(const BasicPose<T>& a, const BasicPose<T>& b) {
  return {normalized(a.rotation * b.rotation), a.translation + rotate(a.rotation, b.translation)};
}

template <class T>
BasicPose<T> inverse(const BasicPose<T>& p) {
  const Quat<T> qi = conjugate(p.rotation);
  return {qi, -rotate(qi, p.translation)};
}

template <class T>
Vec3<T> act_point(const BasicPose<T>& p, const Vec3<T>& x) {
  return rotate(p.rotation, x) + p.translation;
}

template <class T>
BasicPose<T> exp(const BasicTwist<T>& xi) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  for (int i = 0; i < 6; ++i)
    if (!std::isfinite(value_of(xi[i]))) throw InvalidArgument("se3 exp: non-finite twist");

  const Vec3<T>& phi = xi.phi;
  const T theta2 = dot(phi, phi);
  Quat<T> q;
  T a, b; // V = I + a [phi]x + b [phi]x^2
  if (value_of(theta2) < kSmallAngle * kSmallAngle) {
    const T s = T(0.5) - theta2 / T(48);
    q = {T(1) - theta2 / T(8), s * phi.x, s * phi.y, s * phi.z};
    a = T(0.5) - theta2 / T(24);
    b = T(1.0 / 6.0) - theta2 / T(120);
  } else {
    const T theta = sqrt(theta2);
    const T half_sin = sin(theta / T(2));
    const T s = half_sin / theta;
    q = {cos(theta / T(2)), s * phi.x, s * phi.y, s * phi.z};
    a = T(2) * half_sin * half_sin / theta2;
    b = (theta - sin(theta)) / (theta2 * theta);
  }
  const Vec3<T> c = cross(phi, xi.rho);
  return {normalized(q), xi.rho + a * c + b * cross(phi, c)};
}

template <class T>
BasicTwist<T> log(const BasicPose<T>& pose) {
  using std::atan2;
  using std::sqrt;
  Quat<T> q = normalized(pose.rotation);
  if (value_of(q.w) < 0) q = {-q.w, -q.x, -q.y, -q.z};
  const Vec3<T> v = q.vec();
  const T n2 = dot(v, v);

  Vec3<T> phi;
  T c; // V^-1 = I - 1/2 [phi]x + c [phi]x^2
  if (value_of(n2) < 0.25 * kSmallAngle * kSmallAngle) {
    phi = (T(2) / q.w) * (T(1) - n2 / (T(3) * q.w * q.w)) * v;
    c = T(1.0 / 12.0) + dot(phi, phi) / T(720);
  } else {
    const T n = sqrt(n2);
    const T theta = T(2) * atan2(n, q.w);
    if (value_of(theta) >= std::numbers::pi - kBranchMargin)
      throw BranchAmbiguity("se3 log: rotation angle at or beyond pi - 1e-6");
    phi = (theta / n) * v;
    c = (T(1) - (theta / T(2)) * (q.w / n)) / (theta * theta);
  }
  const Vec3<T>& t = pose.translation;
  const Vec3<T> pt = cross(phi, t);
  return {t - T(0.5) * pt + c * cross(phi, pt), phi};
}

inline double rotation_angle(const SE3Pose& p) {
  const Quaternion q = normalized(p.rotation);
  const double n = std::sqrt(q.x * q.x + q.y * q.y + q.z * q.z);
  return 2.0 * std::atan2(n, std::abs(q.w));
}

inline Eigen::Matrix3d quat_to_rot(const Quaternion& q_in) {
  const double n2 = q_in.w * q_in.w + q_in.x * q_in.x + q_in.y * q_in.y + q_in.z * q_in.z;
  if (!(n2 > 0.0) || !std::isfinite(n2)) throw InvalidArgument("quat_to_rot: zero or non-finite quaternion");
  const Quaternion q = normalized(q_in);
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

inline Eigen::Vector3d to_eigen(const Vector3& v) { return {v.x, v.y, v.z}; }
inline Vector3 from_eigen(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

// Lifts a double pose into a Jet pose with zero derivative.
template <class T>
BasicPose<T> lift(const SE3Pose& p) {
  return {{T(p.rotation.w), T(p.rotation.x), T(p.rotation.y), T(p.rotation.z)},
          {T(p.translation.x), T(p.translation.y), T(p.translation.z)}};
}

template <class T>
SE3Pose value_of(const BasicPose<T>& p) {
  return {{value_of(p.rotation.w), value_of(p.rotation.x), value_of(p.rotation.y), value_of(p.rotation.z)},
          {value_of(p.translation.x), value_of(p.translation.y), value_of(p.translation.z)}};
}

} // namespace besplat
