#pragma once

// Glue between datasets and the solver: initial splats and trajectory from
// the dataset's point cloud and pose, and evaluation against references.

#include <algorithm>
#include <cmath>
#include <vector>

#include "besplat/metrics.hpp"
#include "besplat/optimizer.hpp"
#include "besplat/oracle.hpp"

namespace besplat {

// Isotropic splats at the points: scale from the root mean squared distance to
// the three nearest neighbours times `scale_factor`, identity rotation,
// opacity 0.5.
inline Scene initial_scene(const std::vector<InitPoint>& points, double scale_factor = 1.0) {
  Scene scene;
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::vector<double> d2;
    for (std::size_t j = 0; j < points.size(); ++j)
      if (j != i) d2.push_back((points[i].position - points[j].position).squaredNorm());
    const std::size_t k = std::min<std::size_t>(3, d2.size());
    std::partial_sort(d2.begin(), d2.begin() + k, d2.end());
    double mean = 0.0;
    for (std::size_t j = 0; j < k; ++j) mean += d2[j];
    const double s = scale_factor * (k ? std::max(1e-4, std::sqrt(mean / k)) : 0.1);
    scene.push_back(Gaussian::make(points[i].position, Quaternion{}, Eigen::Vector3d::Constant(s), 0.5, points[i].color));
  }
  return scene;
}

// Every knot at the initial pose, each nudged by a seeded twist of size
// cfg.knot_jitter so the knots are not exactly interchangeable.
inline Trajectory initial_trajectory(const ToyDataset& d, const TrainConfig& cfg) {
  Trajectory traj = make_trajectory(cfg.model, d.init_pose, d.meta.exposure_start, d.meta.exposure_end,
                                    static_cast<std::size_t>(cfg.cubic_knots));
  std::mt19937_64 rng = detail::oracle_rng(cfg.seed, 5);
  for (SE3Pose& k : traj.knots) {
    Twist xi;
    xi.phi = cfg.knot_jitter * detail::unit_vector(rng);
    xi.rho = cfg.knot_jitter * detail::unit_vector(rng);
    k = compose(k, exp(xi));
  }
  return traj;
}

inline Observation observation_from(const ToyDataset& d) {
  Observation o;
  o.blurry = d.blurry;
  o.events = d.events;
  o.camera = d.camera;
  o.background = d.background();
  return o;
}

inline TrainState initial_state(const ToyDataset& d, const TrainConfig& cfg) {
  return make_train_state(initial_scene(d.init_points, cfg.init_scale), initial_trajectory(d, cfg));
}

struct EvalReport {
  std::vector<double> frame_psnr, frame_ssim;
  double psnr_mean = 0.0, ssim_mean = 0.0;
  double blurry_psnr_mean = 0.0, blurry_ssim_mean = 0.0;
  bool has_gt_trajectory = false;
  TrajectoryErrors traj;
};

// Renders at the reference timestamps (uniform over the exposure) and scores
// against the dataset's sharp frames and ground-truth trajectory.
inline EvalReport evaluate(const Scene& scene, const Trajectory& traj, const ToyDataset& d) {
  if (d.sharp.empty()) throw ConfigError("evaluate: dataset has no sharp references");
  EvalReport r;
  const std::size_t m = d.sharp.size();
  for (std::size_t i = 0; i < m; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(m - 1);
    const double t = i + 1 == m ? traj.exposure_end : traj.exposure_start + u * traj.exposure_length();
    const Image img = rasterize(scene, pose_at(traj, t), d.camera, d.background()).image;
    r.frame_psnr.push_back(psnr(img, d.sharp[i]));
    r.frame_ssim.push_back(ssim(img, d.sharp[i]));
    r.psnr_mean += r.frame_psnr.back() / m;
    r.ssim_mean += r.frame_ssim.back() / m;
    r.blurry_psnr_mean += psnr(d.blurry, d.sharp[i]) / m;
    r.blurry_ssim_mean += ssim(d.blurry, d.sharp[i]) / m;
  }
  if (!d.traj.knots.empty()) {
    r.has_gt_trajectory = true;
    r.traj = trajectory_errors(traj, d.traj, d.meta.extent);
  }
  return r;
}

} // namespace besplat
