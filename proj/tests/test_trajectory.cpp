#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "besplat/trajectory.hpp"
#include "support.hpp"

using namespace besplat;
using besplat::testing::pose_distance;
using besplat::testing::random_pose;
using besplat::testing::random_twist;

namespace {

SE3Pose translation(double x, double y = 0.0, double z = 0.0) {
  SE3Pose p;
  p.translation = {x, y, z};
  return p;
}

// Knots scattered around a base pose with rotations well inside the log branch.
Trajectory random_trajectory(std::mt19937_64& rng, TrajectoryModel model, std::size_t cubic_knots = 6) {
  Trajectory traj = make_trajectory(model, random_pose(rng), 0.2, 0.3, cubic_knots);
  for (auto& k : traj.knots) k = compose(k, exp(random_twist(rng, 0.4, 0.3)));
  return traj;
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

} // namespace

TEST(CumulativeBasis, EndpointsAndMidpoint) {
  const auto b0 = cumulative_basis(0.0).b;
  EXPECT_EQ(b0[0], 1.0);
  EXPECT_NEAR(b0[1], 5.0 / 6.0, 1e-15);
  EXPECT_NEAR(b0[2], 1.0 / 6.0, 1e-15);
  EXPECT_EQ(b0[3], 0.0);

  const auto b1 = cumulative_basis(std::nextafter(1.0, 0.0)).b;
  EXPECT_NEAR(b1[1], 1.0, 1e-12);
  EXPECT_NEAR(b1[2], 5.0 / 6.0, 1e-12);
  EXPECT_NEAR(b1[3], 1.0 / 6.0, 1e-12);

  // Exact rational evaluation of M [1 u u^2 u^3] at u = 1/2, in 48ths:
  // row 2: (5*8 + 3*4 - 3*2 + 1) / 48, row 3: (8 + 12 + 6 - 2) / 48, row 4: 1/48.
  const auto bh = cumulative_basis(0.5).b;
  EXPECT_NEAR(bh[1], 47.0 / 48.0, 1e-15);
  EXPECT_NEAR(bh[2], 24.0 / 48.0, 1e-15);
  EXPECT_NEAR(bh[3], 1.0 / 48.0, 1e-15);
}

TEST(CumulativeBasis, RangeAndMonotonicity) {
  EXPECT_THROW(cumulative_basis(1.0), RangeError);
  EXPECT_THROW(cumulative_basis(-0.1), RangeError);
  for (int i = 0; i < 100; ++i) {
    const auto b = cumulative_basis(i / 100.0).b;
    EXPECT_EQ(b[0], 1.0);
    for (int j = 1; j < 4; ++j) {
      EXPECT_GE(b[j], 0.0);
      EXPECT_LE(b[j], 1.0);
      EXPECT_LE(b[j], b[j - 1]);
    }
  }
}

TEST(CubicBSpline, ConstantKnots) {
  std::mt19937_64 rng(1);
  const SE3Pose p = random_pose(rng);
  const Trajectory traj = make_trajectory(TrajectoryModel::CubicBSpline, p, 0.0, 1.0, 7);
  for (double t : {0.0, 0.1, 0.5, 0.77, 1.0}) EXPECT_LT(pose_distance(eval_cubic_bspline(traj, t), p), 1e-12);
}

TEST(CubicBSpline, PureTranslationHandExpansion) {
  Trajectory traj = make_trajectory(TrajectoryModel::CubicBSpline, SE3Pose{}, 0.0, 1.0, 4);
  for (int i = 0; i < 4; ++i) traj.knots[i] = translation(i);
  const SE3Pose p = eval_cubic_bspline(traj, 0.0);
  EXPECT_NEAR(p.translation.x, 1.0, 1e-15);
  // At u = 1/2 the offsets are 47/48 + 24/48 + 1/48 = 1.5.
  EXPECT_NEAR(eval_cubic_bspline(traj, 0.5).translation.x, 1.5, 1e-15);
}

TEST(CubicBSpline, ContinuityAcrossSegments) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Trajectory traj = random_trajectory(rng, TrajectoryModel::CubicBSpline, 7);
    for (std::size_t k = 1; k + 3 < traj.knots.size(); ++k) {
      const double boundary = traj.t0 + static_cast<double>(k) * traj.dt;
      const SE3Pose right = detail::cubic_eval<double>(traj.knots, {k, 0.0});
      const SE3Pose left = detail::cubic_eval<double>(traj.knots, {k - 1, 1.0});
      EXPECT_LT(pose_distance(left, right), 1e-9);
      EXPECT_LT(pose_distance(eval_cubic_bspline(traj, boundary), right), 1e-9);
    }
  }
}

TEST(CubicBSpline, OutOfCoverage) {
  const Trajectory traj = make_trajectory(TrajectoryModel::CubicBSpline, SE3Pose{}, 0.0, 1.0, 5);
  EXPECT_THROW(eval_cubic_bspline(traj, -0.01), RangeError);
  EXPECT_THROW(eval_cubic_bspline(traj, 1.01), RangeError);
  EXPECT_NO_THROW(eval_cubic_bspline(traj, 1.0));
}

TEST(Bezier7, EndpointsAndConstant) {
  std::mt19937_64 rng(3);
  const Trajectory traj = random_trajectory(rng, TrajectoryModel::Bezier7);
  EXPECT_LT(pose_distance(eval_bezier7(traj, 0.0), traj.knots.front()), 1e-15);
  EXPECT_LT(pose_distance(eval_bezier7(traj, 1.0), traj.knots.back()), 1e-15);
  const SE3Pose p = random_pose(rng);
  const Trajectory flat = make_trajectory(TrajectoryModel::Bezier7, p, 0.0, 1.0);
  for (double u : {0.0, 0.3, 0.5, 0.9, 1.0}) EXPECT_LT(pose_distance(eval_bezier7(flat, u), p), 1e-12);
}

TEST(Bezier7, ReducesToScalarBezierForTranslations) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u01(-1.0, 1.0);
  Trajectory traj = make_trajectory(TrajectoryModel::Bezier7, SE3Pose{}, 0.0, 1.0);
  std::array<double, 8> xs{};
  for (int i = 0; i < 8; ++i) {
    xs[i] = u01(rng);
    traj.knots[i] = translation(xs[i], 2.0 * xs[i]);
  }
  for (double u : {0.1, 0.25, 0.5, 0.8}) {
    double expected = 0.0;
    for (int i = 0; i < 8; ++i) expected += binomial(7, i) * std::pow(u, i) * std::pow(1 - u, 7 - i) * xs[i];
    const SE3Pose p = eval_bezier7(traj, u);
    EXPECT_NEAR(p.translation.x, expected, 1e-13);
    EXPECT_NEAR(p.translation.y, 2.0 * expected, 1e-13);
  }
}

TEST(Bezier7, WrongKnotCount) {
  Trajectory traj = make_trajectory(TrajectoryModel::Bezier7, SE3Pose{}, 0.0, 1.0);
  traj.knots.pop_back();
  EXPECT_THROW(eval_bezier7(traj, 0.5), InvalidArgument);
  EXPECT_THROW(validate(traj), InvalidArgument);
}

TEST(Linear, EndpointsAndMidpoint) {
  Trajectory traj = make_trajectory(TrajectoryModel::Linear, SE3Pose{}, 0.0, 1.0);
  traj.knots[1] = translation(2.0);
  EXPECT_LT(pose_distance(eval_linear(traj, 0.0), traj.knots[0]), 1e-15);
  EXPECT_LT(pose_distance(eval_linear(traj, 1.0), traj.knots[1]), 1e-15);
  EXPECT_NEAR(eval_linear(traj, 0.5).translation.x, 1.0, 1e-15);
  traj.knots.push_back(SE3Pose{});
  EXPECT_THROW(eval_linear(traj, 0.5), InvalidArgument);
}

TEST(TrajectoryModels, LeftMultiplicationCommutes) {
  std::mt19937_64 rng(5);
  for (auto model : {TrajectoryModel::Linear, TrajectoryModel::CubicBSpline, TrajectoryModel::Bezier7}) {
    for (int trial = 0; trial < 20; ++trial) {
      const Trajectory traj = random_trajectory(rng, model);
      const SE3Pose g = random_pose(rng);
      Trajectory moved = traj;
      for (auto& k : moved.knots) k = compose(g, k);
      for (double u : {0.0, 0.2, 0.5, 0.8, 1.0}) {
        const double t = traj.time_at(u);
        EXPECT_LT(pose_distance(pose_at(moved, t), compose(g, pose_at(traj, t))), 1e-9) << to_string(model);
      }
    }
  }
}

TEST(SampleExposure, Basics) {
  std::mt19937_64 rng(6);
  const Trajectory traj = random_trajectory(rng, TrajectoryModel::Bezier7);
  const auto two = sample_exposure(traj, 2);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_LT(pose_distance(two[0], traj.knots.front()), 1e-15);
  EXPECT_LT(pose_distance(two[1], traj.knots.back()), 1e-15);
  EXPECT_THROW(sample_exposure(traj, 1), InvalidArgument);

  const SE3Pose p = random_pose(rng);
  for (const auto& s : sample_exposure(make_trajectory(TrajectoryModel::Bezier7, p, 0.0, 0.1), 19))
    EXPECT_LT(pose_distance(s, p), 1e-12);

  Trajectory lin = make_trajectory(TrajectoryModel::Linear, translation(1.0, 2.0), 0.0, 0.1);
  lin.knots[1] = translation(3.0, -4.0);
  const auto three = sample_exposure(lin, 3);
  EXPECT_NEAR(three[1].translation.x, 2.0, 1e-15);
  EXPECT_NEAR(three[1].translation.y, -1.0, 1e-15);
}

TEST(KnotJacobians, MatchCentralDifferences) {
  std::mt19937_64 rng(7);
  const double h = 1e-6;
  for (auto model : {TrajectoryModel::Linear, TrajectoryModel::CubicBSpline, TrajectoryModel::Bezier7}) {
    for (int trial = 0; trial < 5; ++trial) {
      const Trajectory traj = random_trajectory(rng, model);
      for (double u : {0.0, 0.37, 0.5, 1.0}) {
        const double t = traj.time_at(u);
        const auto jac = knot_jacobians(traj, t);
        const SE3Pose base_inv = inverse(pose_at(traj, t));
        for (std::size_t k = 0; k < traj.knots.size(); ++k) {
          Matrix6d fd;
          for (int d = 0; d < 6; ++d) {
            Twist step;
            step[d] = h;
            Trajectory plus = traj, minus = traj;
            plus.knots[k] = compose(traj.knots[k], exp(step));
            minus.knots[k] = compose(traj.knots[k], exp(-1.0 * step));
            const Twist ep = log(compose(base_inv, pose_at(plus, t)));
            const Twist em = log(compose(base_inv, pose_at(minus, t)));
            for (int r = 0; r < 6; ++r) fd(r, d) = (ep[r] - em[r]) / (2 * h);
          }
          const double scale = fd.norm();
          if (scale < 1e-7) { // knot has no influence; FD is roundoff noise
            EXPECT_LT(jac[k].norm(), 1e-7);
            continue;
          }
          EXPECT_LT((jac[k] - fd).norm() / scale, 1e-5) << to_string(model) << " knot " << k << " u " << u;
        }
      }
    }
  }
}

TEST(KnotJacobians, CoincidentKnotsGiveBernsteinWeights) {
  const Trajectory traj = make_trajectory(TrajectoryModel::Bezier7, SE3Pose{}, 0.0, 1.0);
  const double u = 0.3;
  const auto jac = knot_jacobians(traj, u);
  for (int i = 0; i < 8; ++i) {
    const double w = binomial(7, i) * std::pow(u, i) * std::pow(1 - u, 7 - i);
    EXPECT_TRUE(jac[i].isApprox(w * Matrix6d::Identity(), 1e-12)) << i;
  }
}

TEST(TrajectoryIo, RoundTripIsExact) {
  std::mt19937_64 rng(8);
  for (auto model : {TrajectoryModel::Linear, TrajectoryModel::CubicBSpline, TrajectoryModel::Bezier7}) {
    const Trajectory traj = random_trajectory(rng, model);
    std::stringstream ss;
    write_trajectory(ss, traj);
    const Trajectory back = read_trajectory(ss);
    EXPECT_EQ(back.model, traj.model);
    EXPECT_EQ(back.t0, traj.t0);
    EXPECT_EQ(back.dt, traj.dt);
    EXPECT_EQ(back.exposure_end, traj.exposure_end);
    ASSERT_EQ(back.knots.size(), traj.knots.size());
    for (std::size_t i = 0; i < traj.knots.size(); ++i) {
      EXPECT_EQ(back.knots[i].rotation.w, traj.knots[i].rotation.w);
      EXPECT_EQ(back.knots[i].translation.z, traj.knots[i].translation.z);
    }
  }
  std::stringstream bad("model bezier7\nt0 0\n");
  EXPECT_THROW(read_trajectory(bad), IoError);
}
