#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "besplat/renderer.hpp"
#include "support.hpp"

using namespace besplat;

namespace {

const Eigen::Vector3d kBlack = Eigen::Vector3d::Zero();

Camera small_camera() { return {100.0, 100.0, 50.0, 50.0, 101, 101}; }

double mse_loss(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  return s / static_cast<double>(a.size());
}

Image mse_grad(const Image& a, const Image& target) {
  Image g(a.width, a.height, a.channels);
  for (std::size_t i = 0; i < a.size(); ++i) g.data[i] = 2.0 * (a.data[i] - target.data[i]) / a.size();
  return g;
}

Image random_target(std::mt19937_64& rng, const Camera& cam) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image t(cam.width, cam.height, 3);
  for (double& v : t.data) v = u(rng);
  return t;
}

} // namespace

TEST(Covariance3d, Examples) {
  EXPECT_TRUE(covariance3d(Quaternion{}, {1, 1, 1}).isApprox(Eigen::Matrix3d::Identity(), 1e-15));
  const Eigen::Matrix3d d = covariance3d(Quaternion{}, {2, 1, 1});
  EXPECT_TRUE(d.isApprox(Eigen::Vector3d(4, 1, 1).asDiagonal().toDenseMatrix(), 1e-15));
}

TEST(Covariance3d, EigenvaluesAreSquaredScales) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d s(u(rng), u(rng), u(rng));
    const Eigen::Matrix3d cov = covariance3d(besplat::testing::random_quat(rng), s);
    EXPECT_LT((cov - cov.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(cov).eigenvalues();
    Eigen::Vector3d s2 = s.array().square();
    std::sort(ev.data(), ev.data() + 3);
    std::sort(s2.data(), s2.data() + 3);
    EXPECT_LT((ev - s2).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Project, OnAxisAndIsotropic) {
  const Camera cam = small_camera();
  const double sigma = 0.05;
  const Gaussian g = Gaussian::make({0, 0, 2}, Quaternion{}, {sigma, sigma, sigma}, 0.5, {1, 1, 1});
  const auto p = project(g, SE3Pose{}, cam);
  ASSERT_TRUE(p.has_value());
  EXPECT_NEAR(p->m2.x(), 50.0, 1e-12);
  EXPECT_NEAR(p->m2.y(), 50.0, 1e-12);
  EXPECT_NEAR(p->depth, 2.0, 1e-15);
  const double expected = std::pow(100.0 * sigma / 2.0, 2) + 0.3;
  EXPECT_NEAR(p->sigma2(0, 0), expected, 1e-12);
  EXPECT_NEAR(p->sigma2(1, 1), expected, 1e-12);
  EXPECT_NEAR(p->sigma2(0, 1), 0.0, 1e-12);
}

TEST(Project, BehindCameraIsCulled) {
  const Gaussian g = Gaussian::make({0, 0, -1}, Quaternion{}, {0.1, 0.1, 0.1}, 0.5, {1, 1, 1});
  EXPECT_FALSE(project(g, SE3Pose{}, small_camera()).has_value());
  const Gaussian near = Gaussian::make({0, 0, 0.005}, Quaternion{}, {0.1, 0.1, 0.1}, 0.5, {1, 1, 1});
  EXPECT_FALSE(project(near, SE3Pose{}, small_camera()).has_value());
}

TEST(Project, PoseMovesCamera) {
  // Camera translated +1 in x sees a point at the origin shifted to negative x.
  SE3Pose pose;
  pose.translation = {1.0, 0.0, -2.0};
  const Gaussian g = Gaussian::make({0, 0, 0}, Quaternion{}, {0.1, 0.1, 0.1}, 0.5, {1, 1, 1});
  const auto p = project(g, pose, small_camera());
  ASSERT_TRUE(p.has_value());
  EXPECT_NEAR(p->m2.x(), 50.0 - 100.0 * 0.5, 1e-12);
}

TEST(Rasterize, EmptySceneIsBackground) {
  const auto tape = rasterize({}, SE3Pose{}, small_camera(), kBlack);
  for (double v : tape.image.data) EXPECT_EQ(v, 0.0);
  const auto grey = rasterize({}, SE3Pose{}, small_camera(), {0.2, 0.4, 0.6});
  EXPECT_DOUBLE_EQ(grey.image.at(3, 7, 1), 0.4);
}

TEST(Rasterize, SingleGaussianOnPixelCenter) {
  const double o = 0.7;
  const Eigen::Vector3d c(0.9, 0.2, 0.4), bg(0.1, 0.5, 0.3);
  const Gaussian g = Gaussian::make({0, 0, 2}, Quaternion{}, {0.05, 0.05, 0.05}, o, c);
  const auto tape = rasterize({g}, SE3Pose{}, small_camera(), bg);
  for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(tape.image.at(50, 50, ch), c[ch] * o + (1 - o) * bg[ch], 1e-12);
}

TEST(Rasterize, TwoOverlappingGaussiansBruteForce) {
  const Camera cam = small_camera();
  const Eigen::Vector3d bg(0.3, 0.3, 0.3);
  // Listed far-first so the depth sort has work to do.
  const Gaussian far = Gaussian::make({0.02, 0.01, 2.0}, Quaternion{}, {0.1, 0.08, 0.1}, 0.8, {0.1, 0.9, 0.2});
  const Gaussian near = Gaussian::make({-0.01, 0.0, 1.0}, Quaternion{}, {0.03, 0.05, 0.04}, 0.6, {0.8, 0.1, 0.5});
  const Scene scene{far, near};
  const auto tape = rasterize(scene, SE3Pose{}, cam, bg, RenderOptions::exact());

  auto alpha = [&](const Gaussian& g, int x, int y) {
    const auto p = *project(g, SE3Pose{}, cam);
    const Eigen::Vector2d d(x - p.m2.x(), y - p.m2.y());
    return g.opacity() * std::exp(-0.5 * d.dot(p.sigma2.inverse() * d));
  };
  for (int y = 40; y < 60; y += 3) {
    for (int x = 40; x < 60; x += 3) {
      const double a1 = alpha(near, x, y), a2 = alpha(far, x, y);
      for (int ch = 0; ch < 3; ++ch) {
        const double expected =
            near.color[ch] * a1 + far.color[ch] * a2 * (1 - a1) + bg[ch] * (1 - a1) * (1 - a2);
        EXPECT_NEAR(tape.image.at(x, y, ch), expected, 1e-12);
      }
    }
  }
}

TEST(Rasterize, TapeInvariantsAndRange) {
  std::mt19937_64 rng(2);
  const Camera cam = besplat::testing::fd_camera();
  for (int trial = 0; trial < 10; ++trial) {
    const Scene scene = besplat::testing::random_fd_scene(rng, 10);
    const auto tape = rasterize(scene, SE3Pose{}, cam, {0.5, 0.5, 0.5});
    for (std::size_t p = 0; p + 1 < tape.offsets.size(); ++p) {
      double prev = 1.0;
      for (std::size_t e = tape.offsets[p]; e < tape.offsets[p + 1]; ++e) {
        const auto& ent = tape.entries[e];
        EXPECT_LE(ent.transmittance, prev);
        EXPECT_GT(ent.alpha, 0.0);
        EXPECT_LE(ent.alpha, 1.0);
        prev = ent.transmittance;
      }
    }
    for (double v : tape.image.data) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Rasterize, EqualDepthTieBreakIsByIndex) {
  const Camera cam = small_camera();
  const Gaussian a = Gaussian::make({0, 0, 2}, Quaternion{}, {0.05, 0.05, 0.05}, 0.5, {1, 0, 0});
  const Gaussian b = Gaussian::make({0, 0, 2}, Quaternion{}, {0.05, 0.05, 0.05}, 0.5, {0, 0, 1});
  const auto ab = rasterize({a, b}, SE3Pose{}, cam, kBlack);
  const auto again = rasterize({a, b}, SE3Pose{}, cam, kBlack);
  EXPECT_EQ(ab.image.data, again.image.data);
  EXPECT_NEAR(ab.image.at(50, 50, 0), 0.5, 1e-12); // a is in front
  EXPECT_NEAR(ab.image.at(50, 50, 2), 0.25, 1e-12);
}

TEST(RenderGray, WhiteRedAndLinearity) {
  const Camera cam = small_camera();
  const Gaussian white = Gaussian::make({0, 0, 2}, Quaternion{}, {0.5, 0.5, 0.5}, 0.9, {1, 1, 1});
  for (double v : render_gray({white}, SE3Pose{}, cam, {1, 1, 1}).data) EXPECT_NEAR(v, 1.0, 1e-12);
  for (double v : render_gray({}, SE3Pose{}, cam, {0.6, 0, 0}).data) EXPECT_NEAR(v, 0.299 * 0.6, 1e-15);
  Image img(4, 4, 3);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (double& v : img.data) v = u(rng);
  Image scaled = img;
  for (double& v : scaled.data) v *= 2.5;
  const Image g1 = to_gray(img), g2 = to_gray(scaled);
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g2.data[i], 2.5 * g1.data[i], 1e-14);
}

TEST(Backward, ColorGradientSingleGaussian) {
  const Camera cam = small_camera();
  const Gaussian g = Gaussian::make({0, 0, 2}, Quaternion{}, {0.05, 0.05, 0.05}, 0.7, {0.5, 0.5, 0.5});
  const auto tape = rasterize({g}, SE3Pose{}, cam, kBlack);
  Image dl(cam.width, cam.height, 3);
  dl.at(50, 50, 0) = 1.0;
  dl.at(50, 50, 2) = -2.0;
  const Gradients grads = backward(tape, dl);
  EXPECT_NEAR(grads.gaussians[0].color[0], 0.7, 1e-12);
  EXPECT_NEAR(grads.gaussians[0].color[1], 0.0, 1e-12);
  EXPECT_NEAR(grads.gaussians[0].color[2], -1.4, 1e-12);
}

TEST(Backward, ShapeMismatch) {
  const auto tape = rasterize({}, SE3Pose{}, small_camera(), kBlack);
  EXPECT_THROW(backward(tape, Image(3, 3, 3)), InvalidArgument);
}

namespace {

// Perturbs stored parameter `k` (0..13) of Gaussian g by h.
void nudge(Gaussian& g, int k, double h) {
  double* slot[14] = {&g.mean[0],       &g.mean[1],       &g.mean[2],      &g.rotation.w, &g.rotation.x,
                      &g.rotation.y,    &g.rotation.z,    &g.log_scale[0], &g.log_scale[1], &g.log_scale[2],
                      &g.opacity_logit, &g.color[0],      &g.color[1],     &g.color[2]};
  *slot[k] += h;
}

double analytic(const GaussianGrad& gg, int k) {
  if (k < 3) return gg.mean[k];
  if (k < 7) return gg.rotation[k - 3];
  if (k < 10) return gg.log_scale[k - 7];
  if (k == 10) return gg.opacity_logit;
  return gg.color[k - 11];
}

} // namespace

TEST(Backward, GaussianParametersMatchFiniteDifferences) {
  std::mt19937_64 rng(4);
  const Camera cam = besplat::testing::fd_camera();
  const RenderOptions opt = RenderOptions::exact();
  const Eigen::Vector3d bg(0.4, 0.5, 0.6);
  const double h = 1e-5;
  for (int trial = 0; trial < 5; ++trial) {
    const Scene scene = besplat::testing::random_fd_scene(rng, 6);
    const SE3Pose pose = exp(besplat::testing::random_twist(rng, 0.1, 0.2));
    const Image target = random_target(rng, cam);
    const auto tape = rasterize(scene, pose, cam, bg, opt);
    const Gradients grads = backward(tape, mse_grad(tape.image, target));
    for (std::size_t i = 0; i < scene.size(); ++i) {
      for (int k = 0; k < 14; ++k) {
        Scene plus = scene, minus = scene;
        nudge(plus[i], k, h);
        nudge(minus[i], k, -h);
        const double fd = (mse_loss(rasterize(plus, pose, cam, bg, opt).image, target) -
                           mse_loss(rasterize(minus, pose, cam, bg, opt).image, target)) /
                          (2 * h);
        const double a = analytic(grads.gaussians[i], k);
        if (std::max(std::abs(a), std::abs(fd)) > 1e-6) {
          EXPECT_LT(besplat::testing::rel_error(a, fd), 1e-3) << "gaussian " << i << " param " << k;
        }
      }
    }
  }
}

TEST(Backward, PoseGradientMatchesFrozenCovarianceSurrogate) {
  std::mt19937_64 rng(5);
  const Camera cam = besplat::testing::fd_camera();
  const RenderOptions opt = RenderOptions::exact();
  const Eigen::Vector3d bg(0.4, 0.5, 0.6);
  const double h = 1e-5;
  for (int trial = 0; trial < 5; ++trial) {
    const Scene scene = besplat::testing::random_fd_scene(rng, 6);
    const SE3Pose pose = exp(besplat::testing::random_twist(rng, 0.1, 0.2));
    const Image target = random_target(rng, cam);
    const auto tape = rasterize(scene, pose, cam, bg, opt);
    const Gradients grads = backward(tape, mse_grad(tape.image, target));

    auto surrogate = [&](const SE3Pose& moved) {
      std::vector<std::optional<Projected2D>> proj(scene.size());
      for (std::size_t i = 0; i < scene.size(); ++i) {
        const auto base = project(scene[i], pose, cam, opt);
        const auto shifted = project(scene[i], moved, cam, opt);
        if (!base || !shifted) continue;
        proj[i] = Projected2D{shifted->m2, base->sigma2, shifted->depth};
      }
      return mse_loss(composite(scene, proj, cam, bg, opt).image, target);
    };
    for (int d = 0; d < 6; ++d) {
      Twist step;
      step[d] = h;
      const double fd =
          (surrogate(compose(pose, exp(step))) - surrogate(compose(pose, exp(-1.0 * step)))) / (2 * h);
      EXPECT_LT(besplat::testing::rel_error(grads.pose[d], fd), 1e-3) << "dim " << d;
    }
  }
}
