#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "besplat/se3.hpp"
#include "support.hpp"

using namespace besplat;
using besplat::testing::random_pose;
using besplat::testing::random_twist;

namespace {

void expect_pose_near(const SE3Pose& a, const SE3Pose& b, double tol) {
  EXPECT_LT(besplat::testing::pose_distance(a, b), tol);
}

double quat_norm(const Quaternion& q) { return std::sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z); }

} // namespace

TEST(Se3Exp, ZeroTwistIsIdentity) {
  const SE3Pose p = exp(Twist{});
  EXPECT_DOUBLE_EQ(p.rotation.w, 1.0);
  EXPECT_DOUBLE_EQ(p.rotation.x, 0.0);
  EXPECT_DOUBLE_EQ(p.translation.x, 0.0);
  EXPECT_DOUBLE_EQ(p.translation.z, 0.0);
}

TEST(Se3Exp, QuarterTurnAboutZ) {
  Twist xi;
  xi.phi = {0.0, 0.0, std::numbers::pi / 2};
  const Vector3 r = act_point(exp(xi), Vector3{1.0, 0.0, 0.0});
  EXPECT_NEAR(r.x, 0.0, 1e-9);
  EXPECT_NEAR(r.y, 1.0, 1e-9);
  EXPECT_NEAR(r.z, 0.0, 1e-9);
}

TEST(Se3Exp, RejectsNonFinite) {
  Twist xi;
  xi.rho.x = std::nan("");
  EXPECT_THROW(exp(xi), InvalidArgument);
}

TEST(Se3Log, IdentityAndPureTranslation) {
  const Twist z = log(SE3Pose{});
  for (int i = 0; i < 6; ++i) EXPECT_EQ(z[i], 0.0);
  SE3Pose t;
  t.translation = {1.0, 2.0, 3.0};
  const Twist xi = log(t);
  EXPECT_NEAR(xi.rho.x, 1.0, 1e-15);
  EXPECT_NEAR(xi.rho.y, 2.0, 1e-15);
  EXPECT_NEAR(xi.rho.z, 3.0, 1e-15);
  EXPECT_EQ(xi.phi.x, 0.0);
}

TEST(Se3Log, RejectsBranchCut) {
  Twist xi;
  xi.phi = {0.0, std::numbers::pi, 0.0};
  EXPECT_THROW(log(exp(xi)), BranchAmbiguity);
  xi.phi = {0.0, std::numbers::pi - 2e-6, 0.0};
  EXPECT_NO_THROW(log(exp(xi)));
}

TEST(Se3Log, RoundTripRandomTwists) {
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Twist xi = random_twist(rng, 3.0, 5.0);
    const Twist back = log(exp(xi));
    for (int k = 0; k < 6; ++k) worst = std::max(worst, std::abs(back[k] - xi[k]));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Se3Log, RoundTripTinyAngles) {
  std::mt19937_64 rng(8);
  for (double scale : {1e-12, 1e-8, 5e-7, 2e-6, 1e-4}) {
    for (int i = 0; i < 50; ++i) {
      const Twist xi = random_twist(rng, scale, 1.0);
      const Twist back = log(exp(xi));
      for (int k = 0; k < 6; ++k) EXPECT_NEAR(back[k], xi[k], 1e-12) << "scale " << scale;
    }
  }
}

TEST(Se3Log, ExpOfLogRandomPoses) {
  std::mt19937_64 rng(9);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    SE3Pose p = random_pose(rng);
    if (rotation_angle(p) > std::numbers::pi - 1e-3) continue;
    worst = std::max(worst, besplat::testing::pose_distance(exp(log(p)), p));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Se3Group, IdentityInverseAssociativity) {
  std::mt19937_64 rng(10);
  for (int i = 0; i < 200; ++i) {
    const SE3Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    expect_pose_near(compose(SE3Pose{}, a), a, 1e-12);
    const SE3Pose e = compose(a, inverse(a));
    EXPECT_LT(rotation_angle(e), 1e-9);
    EXPECT_LT(std::sqrt(dot(e.translation, e.translation)), 1e-9);
    expect_pose_near(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-9);
    EXPECT_NEAR(quat_norm(compose(a, b).rotation), 1.0, 1e-9);
    EXPECT_NEAR(quat_norm(inverse(a).rotation), 1.0, 1e-9);
  }
}

TEST(Se3Act, IdentityTranslationAndComposition) {
  const Vector3 p{0.3, -1.2, 2.5};
  const Vector3 same = act_point(SE3Pose{}, p);
  EXPECT_EQ(same.x, p.x);
  SE3Pose t;
  t.translation = {1.0, 2.0, 3.0};
  const Vector3 moved = act_point(t, p);
  EXPECT_NEAR(moved.z, 5.5, 1e-15);

  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const SE3Pose a = random_pose(rng), b = random_pose(rng);
    const Vector3 lhs = act_point(compose(a, b), p);
    const Vector3 rhs = act_point(a, act_point(b, p));
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(lhs[k], rhs[k], 1e-9);
  }
}

TEST(QuatToRot, KnownRotations) {
  EXPECT_TRUE(quat_to_rot(Quaternion{1, 0, 0, 0}).isApprox(Eigen::Matrix3d::Identity(), 1e-15));
  const double c = std::cos(std::numbers::pi / 4), s = std::sin(std::numbers::pi / 4);
  Eigen::Matrix3d rz;
  rz << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  EXPECT_LT((quat_to_rot(Quaternion{c, 0, 0, s}) - rz).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(quat_to_rot(Quaternion{0, 0, 0, 0}), InvalidArgument);
}

TEST(QuatToRot, ProperRotationProperty) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 500; ++i) {
    const Eigen::Matrix3d r = quat_to_rot(besplat::testing::random_quat(rng));
    EXPECT_LT((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-9);
  }
}

TEST(QuatToRot, AgreesWithQuaternionAction) {
  std::mt19937_64 rng(13);
  const Vector3 p{0.4, -0.7, 1.9};
  for (int i = 0; i < 100; ++i) {
    const Quaternion q = besplat::testing::random_quat(rng);
    const Eigen::Vector3d a = quat_to_rot(q) * to_eigen(p);
    const Vector3 b = rotate(q, p);
    EXPECT_NEAR(a.x(), b.x, 1e-12);
    EXPECT_NEAR(a.y(), b.y, 1e-12);
    EXPECT_NEAR(a.z(), b.z, 1e-12);
  }
}
