#pragma once

// Image quality metrics and trajectory error after rigid alignment.

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "besplat/errors.hpp"
#include "besplat/image.hpp"
#include "besplat/se3.hpp"
#include "besplat/trajectory.hpp"

namespace besplat {

inline constexpr double kPsnrCap = 100.0;

inline double psnr(const Image& a, const Image& b, double peak = 1.0) {
  if (!a.same_shape(b)) throw InvalidArgument("psnr: shape mismatch");
  if (a.size() == 0) throw InvalidArgument("psnr: empty image");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    s += d * d;
  }
  const double mse = s / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

inline constexpr int kSsimWindow = 11;

inline std::array<double, kSsimWindow> ssim_kernel(double sigma = 1.5) {
  std::array<double, kSsimWindow> k{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    k[i] = std::exp(-0.5 * d * d / (sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Mean SSIM over window positions that fit entirely inside the image,
// computed per channel and averaged over channels.
inline double ssim(const Image& a, const Image& b, double peak = 1.0) {
  if (!a.same_shape(b)) throw InvalidArgument("ssim: shape mismatch");
  if (a.width < kSsimWindow || a.height < kSsimWindow) throw InvalidArgument("ssim: image smaller than the window");
  const auto k = ssim_kernel();
  const double c1 = (0.01 * peak) * (0.01 * peak), c2 = (0.03 * peak) * (0.03 * peak);
  const int r = kSsimWindow / 2;
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    double sum = 0.0;
    int count = 0;
    for (int y = r; y < a.height - r; ++y)
      for (int x = r; x < a.width - r; ++x) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (int j = -r; j <= r; ++j)
          for (int i = -r; i <= r; ++i) {
            const double w = k[j + r] * k[i + r];
            const double va = a.at(x + i, y + j, c), vb = b.at(x + i, y + j, c);
            mx += w * va;
            my += w * vb;
            xx += w * va * va;
            yy += w * vb * vb;
            xy += w * va * vb;
          }
        const double sx = xx - mx * mx, sy = yy - my * my, sxy = xy - mx * my;
        sum += ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sx + sy + c2));
        ++count;
      }
    total += sum / count;
  }
  return total / a.channels;
}

struct TrajectoryErrors {
  double rot_rmse_deg = 0.0;
  double trans_rmse_frac = 0.0;
  SE3Pose alignment; // applied on the left of the estimate
};

namespace detail {

// Tangent residual of G * p against q, translation scaled by 1/extent.
inline Eigen::Matrix<double, 6, 1> alignment_residual(const SE3Pose& g, const SE3Pose& p, const SE3Pose& q,
                                                      double extent) {
  const SE3Pose d = compose(inverse(q), compose(g, p));
  const Vector3 dt = d.translation;
  const Quaternion dq = d.rotation.w < 0 ? Quaternion{-d.rotation.w, -d.rotation.x, -d.rotation.y, -d.rotation.z}
                                         : d.rotation;
  const double n = std::sqrt(dq.x * dq.x + dq.y * dq.y + dq.z * dq.z);
  const double angle = 2.0 * std::atan2(n, dq.w);
  const double f = n > 0.0 ? angle / n : 2.0;
  Eigen::Matrix<double, 6, 1> r;
  r << dt.x / extent, dt.y / extent, dt.z / extent, f * dq.x, f * dq.y, f * dq.z;
  return r;
}

} // namespace detail

// Rigid transform G minimising sum_i |res(G p_i, q_i)|^2: chordal closed form
// for the start, then Gauss-Newton with forward-difference Jacobians.
inline SE3Pose align_poses(const std::vector<SE3Pose>& est, const std::vector<SE3Pose>& gt, double extent) {
  if (est.size() != gt.size() || est.empty()) throw InvalidArgument("align_poses: need matching non-empty pose lists");
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < est.size(); ++i) m += quat_to_rot(gt[i].rotation) * quat_to_rot(est[i].rotation).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Eigen::Matrix3d rg = svd.matrixU() * d * svd.matrixV().transpose();
  Eigen::Vector3d tg = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < est.size(); ++i)
    tg += to_eigen(gt[i].translation) - rg * to_eigen(est[i].translation);
  tg /= static_cast<double>(est.size());
  SE3Pose g;
  const Eigen::Quaterniond qg(rg);
  g.rotation = normalized(Quaternion{qg.w(), qg.x(), qg.y(), qg.z()});
  g.translation = from_eigen(tg);

  const std::size_t n = est.size();
  for (int iter = 0; iter < 20; ++iter) {
    Eigen::MatrixXd jac(6 * n, 6);
    Eigen::VectorXd res(6 * n);
    for (std::size_t i = 0; i < n; ++i) res.segment<6>(6 * i) = detail::alignment_residual(g, est[i], gt[i], extent);
    const double h = 1e-7;
    for (int k = 0; k < 6; ++k) {
      Twist e;
      e[k] = h;
      const SE3Pose gk = compose(exp(e), g);
      for (std::size_t i = 0; i < n; ++i)
        jac.block<6, 1>(6 * i, k) = (detail::alignment_residual(gk, est[i], gt[i], extent) - res.segment<6>(6 * i)) / h;
    }
    const Eigen::Matrix<double, 6, 1> step = (jac.transpose() * jac).ldlt().solve(-jac.transpose() * res);
    if (!step.allFinite()) break;
    Twist e;
    for (int k = 0; k < 6; ++k) e[k] = step[k];
    g = compose(exp(e), g);
    if (step.norm() < 1e-12) break;
  }
  return g;
}

// RMSE over `samples` uniform exposure times of the ground truth. The estimate
// is evaluated at the same normalised exposure positions.
inline TrajectoryErrors trajectory_errors(const Trajectory& est, const Trajectory& gt, double extent,
                                          std::size_t samples = 19) {
  std::vector<SE3Pose> pe, pg;
  for (std::size_t i = 0; i < samples; ++i) {
    const double u = samples == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(samples - 1);
    pg.push_back(pose_at(gt, gt.exposure_start + u * gt.exposure_length()));
    pe.push_back(pose_at(est, i + 1 == samples ? est.exposure_end : est.exposure_start + u * est.exposure_length()));
  }
  pg.back() = pose_at(gt, gt.exposure_end);
  TrajectoryErrors out;
  out.alignment = align_poses(pe, pg, extent);
  double rot = 0.0, trans = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const SE3Pose a = compose(out.alignment, pe[i]);
    const SE3Pose d = compose(inverse(pg[i]), a);
    rot += rotation_angle(d) * rotation_angle(d);
    const Vector3 dt = a.translation - pg[i].translation;
    trans += dot(dt, dt);
  }
  out.rot_rmse_deg = std::sqrt(rot / samples) * 180.0 / std::numbers::pi;
  out.trans_rmse_frac = std::sqrt(trans / samples) / extent;
  return out;
}

} // namespace besplat
