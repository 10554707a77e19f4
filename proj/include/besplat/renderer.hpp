#pragma once

// Gaussian splat rasterizer with an analytic backward pass.
//
// Poses are camera-to-world. A world point m maps to the camera frame as
// R^T (m - t); the camera looks down +z and pixel (x, y) has its center at
// integer coordinates (x, y).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "besplat/errors.hpp"
#include "besplat/image.hpp"
#include "besplat/se3.hpp"

namespace besplat {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// One splat. Scale and opacity are stored pre-activation so unconstrained
// updates keep scale > 0 and opacity in (0, 1).
struct Gaussian {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Quaternion rotation{};
  Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
  double opacity_logit = 0.0;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();

  Eigen::Vector3d scale() const { return log_scale.array().exp(); }
  double opacity() const { return sigmoid(opacity_logit); }

  static Gaussian make(const Eigen::Vector3d& mean, const Quaternion& q, const Eigen::Vector3d& scale,
                       double opacity, const Eigen::Vector3d& color) {
    Gaussian g;
    g.mean = mean;
    g.rotation = normalized(q);
    g.log_scale = scale.array().log();
    g.opacity_logit = logit(opacity);
    g.color = color;
    return g;
  }
};

using Scene = std::vector<Gaussian>;

struct Camera {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 1, height = 1;

  void validate() const {
    if (!(fx > 0.0 && fy > 0.0)) throw InvalidArgument("camera: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw InvalidArgument("camera: empty image");
    if (!(cx >= 0.0 && cx <= width - 1.0 && cy >= 0.0 && cy <= height - 1.0))
      throw InvalidArgument("camera: principal point outside the image");
  }
};

struct Projected2D {
  Eigen::Vector2d m2 = Eigen::Vector2d::Zero();
  Eigen::Matrix2d sigma2 = Eigen::Matrix2d::Identity();
  double depth = 0.0;
};

struct RenderOptions {
  double eps_reg = 0.3;          // pixel^2 added to the 2D covariance diagonal
  double near_plane = 0.01;
  double window_sigmas = 3.0;    // influence box half-width in standard deviations
  double alpha_min = 1.0 / 255.0;
  double transmittance_min = 1e-4;
  double alpha_max = 0.999;

  // No influence window, no contribution cutoff, no early exit.
  static RenderOptions exact() {
    RenderOptions o;
    o.window_sigmas = std::numeric_limits<double>::infinity();
    o.alpha_min = 0.0;
    o.transmittance_min = 0.0;
    return o;
  }
};

inline constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;

inline Eigen::Matrix3d covariance3d(const Quaternion& q, const Eigen::Vector3d& s) {
  const Eigen::Matrix3d m = quat_to_rot(q) * s.asDiagonal();
  return m * m.transpose();
}

inline Eigen::Matrix3d rotation_matrix(const SE3Pose& pose) { return quat_to_rot(pose.rotation); }

namespace detail {

struct ProjectionCache {
  bool visible = false;
  Eigen::Vector3d pc = Eigen::Vector3d::Zero();
  Eigen::Matrix<double, 2, 3> jac = Eigen::Matrix<double, 2, 3>::Zero();
  Eigen::Matrix3d sigma_cam = Eigen::Matrix3d::Zero();
  Projected2D proj;
};

inline ProjectionCache project_cached(const Gaussian& g, const Eigen::Matrix3d& world_to_cam,
                                      const Eigen::Vector3d& cam_center, const Camera& cam,
                                      const RenderOptions& opt) {
  ProjectionCache c;
  c.pc = world_to_cam * (g.mean - cam_center);
  const double x = c.pc.x(), y = c.pc.y(), z = c.pc.z();
  if (!(z > opt.near_plane)) return c;
  c.visible = true;
  const double iz = 1.0 / z;
  c.jac << cam.fx * iz, 0.0, -cam.fx * x * iz * iz, 0.0, cam.fy * iz, -cam.fy * y * iz * iz;
  c.sigma_cam = world_to_cam * covariance3d(g.rotation, g.scale()) * world_to_cam.transpose();
  c.proj.m2 = {cam.fx * x * iz + cam.cx, cam.fy * y * iz + cam.cy};
  c.proj.sigma2 = c.jac * c.sigma_cam * c.jac.transpose() + opt.eps_reg * Eigen::Matrix2d::Identity();
  c.proj.depth = z;
  return c;
}

} // namespace detail

// Perspective projection of one Gaussian; nullopt when culled by the near plane.
inline std::optional<Projected2D> project(const Gaussian& g, const SE3Pose& pose, const Camera& cam,
                                          const RenderOptions& opt = {}) {
  const Eigen::Matrix3d r = rotation_matrix(pose);
  const auto c = detail::project_cached(g, r.transpose(), to_eigen(pose.translation), cam, opt);
  if (!c.visible) return std::nullopt;
  return c.proj;
}

struct TapeEntry {
  int gaussian;
  double alpha;
  double transmittance; // product of (1 - alpha_j) over entries in front
};

namespace detail {

// Screen-space data of one visible splat, laid out for the compositing loops.
struct Splat2D {
  double mx, my;     // projected mean
  double ca, cb, cc; // conic [[ca cb][cb cc]] = inverse 2D covariance
  double opacity;
  double r, g, b;
  int x0, x1, y0, y1; // influence window, inclusive
};

} // namespace detail

// Everything the backward pass needs from a forward pass.
struct RenderTape {
  Image image;
  std::vector<std::size_t> offsets; // pixel p owns entries [offsets[p], offsets[p+1])
  std::vector<TapeEntry> entries;
  std::vector<double> final_transmittance;

  Scene scene;
  SE3Pose pose;
  Camera camera;
  RenderOptions options;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  std::vector<detail::ProjectionCache> cache;
  std::vector<detail::Splat2D> splats; // indexed like scene; meaningful for visible splats only
};

namespace detail {

inline void composite_into(RenderTape& tape) {
  const Camera& cam = tape.camera;
  const RenderOptions& opt = tape.options;
  const std::size_t n = tape.scene.size();
  tape.splats.assign(n, Splat2D{});

  std::vector<int> order;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = tape.cache[i];
    if (!c.visible) continue;
    const Eigen::Matrix2d& s = c.proj.sigma2;
    const Eigen::Matrix2d conic = s.inverse();
    const double mid = 0.5 * (s(0, 0) + s(1, 1));
    const double det = s.determinant();
    const double lambda = mid + std::sqrt(std::max(mid * mid - det, 0.0));
    const double r = opt.window_sigmas * std::sqrt(lambda);
    const double fx0 = std::ceil(c.proj.m2.x() - r), fx1 = std::floor(c.proj.m2.x() + r);
    const double fy0 = std::ceil(c.proj.m2.y() - r), fy1 = std::floor(c.proj.m2.y() + r);
    Splat2D& sp = tape.splats[i];
    sp.mx = c.proj.m2.x();
    sp.my = c.proj.m2.y();
    sp.ca = conic(0, 0);
    sp.cb = 0.5 * (conic(0, 1) + conic(1, 0));
    sp.cc = conic(1, 1);
    sp.opacity = tape.scene[i].opacity();
    sp.r = tape.scene[i].color.x();
    sp.g = tape.scene[i].color.y();
    sp.b = tape.scene[i].color.z();
    sp.x0 = static_cast<int>(std::max(fx0, 0.0));
    sp.x1 = static_cast<int>(std::min(fx1, cam.width - 1.0));
    sp.y0 = static_cast<int>(std::max(fy0, 0.0));
    sp.y1 = static_cast<int>(std::min(fy1, cam.height - 1.0));
    if (sp.x0 > sp.x1 || sp.y0 > sp.y1) continue;
    order.push_back(static_cast<int>(i));
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return tape.cache[a].proj.depth < tape.cache[b].proj.depth; });

  tape.image = Image(cam.width, cam.height, 3);
  const std::size_t npix = tape.image.pixels();
  tape.offsets.assign(npix + 1, 0);
  tape.final_transmittance.assign(npix, 1.0);
  tape.entries.clear();

  const double bg_r = tape.background.x(), bg_g = tape.background.y(), bg_b = tape.background.z();
  std::vector<const Splat2D*> row;
  std::vector<int> row_index;
  for (int y = 0; y < cam.height; ++y) {
    row.clear();
    row_index.clear();
    for (int i : order)
      if (tape.splats[i].y0 <= y && y <= tape.splats[i].y1) {
        row.push_back(&tape.splats[i]);
        row_index.push_back(i);
      }
    for (int x = 0; x < cam.width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * cam.width + x;
      tape.offsets[p] = tape.entries.size();
      double t = 1.0, cr = 0.0, cg = 0.0, cb = 0.0;
      for (std::size_t k = 0; k < row.size(); ++k) {
        const Splat2D& sp = *row[k];
        if (x < sp.x0 || x > sp.x1) continue;
        const double dx = x - sp.mx, dy = y - sp.my;
        const double sigma = 0.5 * (sp.ca * dx * dx + sp.cc * dy * dy) + sp.cb * dx * dy;
        const double alpha = std::min(opt.alpha_max, sp.opacity * std::exp(-sigma));
        if (alpha < opt.alpha_min || alpha <= 0.0) continue;
        tape.entries.push_back({row_index[k], alpha, t});
        const double w = alpha * t;
        cr += sp.r * w;
        cg += sp.g * w;
        cb += sp.b * w;
        t *= 1.0 - alpha;
        if (t < opt.transmittance_min) break;
      }
      tape.final_transmittance[p] = t;
      double* out = &tape.image.data[3 * p];
      out[0] = cr + t * bg_r;
      out[1] = cg + t * bg_g;
      out[2] = cb + t * bg_b;
    }
  }
  tape.offsets[npix] = tape.entries.size();
}

} // namespace detail

// Front-to-back alpha compositing in ascending depth (ties broken by index).
inline RenderTape rasterize(const Scene& scene, const SE3Pose& pose, const Camera& cam,
                            const Eigen::Vector3d& background, const RenderOptions& opt = {}) {
  cam.validate();
  RenderTape tape;
  tape.scene = scene;
  tape.pose = pose;
  tape.camera = cam;
  tape.options = opt;
  tape.background = background;
  const Eigen::Matrix3d w2c = rotation_matrix(pose).transpose();
  const Eigen::Vector3d center = to_eigen(pose.translation);
  tape.cache.reserve(scene.size());
  for (const Gaussian& g : scene) tape.cache.push_back(detail::project_cached(g, w2c, center, cam, opt));
  detail::composite_into(tape);
  return tape;
}

// Composites caller-supplied projections (nullopt = culled). Used to build
// surrogate forward passes; the resulting tape supports forward values only.
inline RenderTape composite(const Scene& scene, const std::vector<std::optional<Projected2D>>& projected,
                            const Camera& cam, const Eigen::Vector3d& background, const RenderOptions& opt = {}) {
  if (projected.size() != scene.size()) throw InvalidArgument("composite: projection count mismatch");
  cam.validate();
  RenderTape tape;
  tape.scene = scene;
  tape.camera = cam;
  tape.options = opt;
  tape.background = background;
  tape.cache.resize(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (!projected[i]) continue;
    tape.cache[i].visible = true;
    tape.cache[i].proj = *projected[i];
  }
  detail::composite_into(tape);
  return tape;
}

inline Image to_gray(const Image& rgb) {
  if (rgb.channels != 3) throw InvalidArgument("to_gray: RGB image required");
  Image g(rgb.width, rgb.height, 1);
  for (std::size_t p = 0; p < rgb.pixels(); ++p)
    g.data[p] = kLumaR * rgb.data[3 * p] + kLumaG * rgb.data[3 * p + 1] + kLumaB * rgb.data[3 * p + 2];
  return g;
}

inline Image render_gray(const Scene& scene, const SE3Pose& pose, const Camera& cam,
                         const Eigen::Vector3d& background, const RenderOptions& opt = {}) {
  return to_gray(rasterize(scene, pose, cam, background, opt).image);
}

// Spreads a luminance gradient back onto RGB channels.
inline Image gray_grad_to_rgb(const Image& dgray) {
  Image out(dgray.width, dgray.height, 3);
  for (std::size_t p = 0; p < dgray.pixels(); ++p) {
    out.data[3 * p] = kLumaR * dgray.data[p];
    out.data[3 * p + 1] = kLumaG * dgray.data[p];
    out.data[3 * p + 2] = kLumaB * dgray.data[p];
  }
  return out;
}

using Vector6d = Eigen::Matrix<double, 6, 1>;

// Gradients with respect to the stored (pre-activation) parameters.
struct GaussianGrad {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Vector4d rotation = Eigen::Vector4d::Zero(); // (w, x, y, z)
  Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
  double opacity_logit = 0.0;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
};

struct Gradients {
  std::vector<GaussianGrad> gaussians;
  Vector6d pose = Vector6d::Zero(); // right-perturbation twist (rho, phi) of the camera pose

  void add(const Gradients& o) {
    if (gaussians.size() < o.gaussians.size()) gaussians.resize(o.gaussians.size());
    for (std::size_t i = 0; i < o.gaussians.size(); ++i) {
      auto& a = gaussians[i];
      const auto& b = o.gaussians[i];
      a.mean += b.mean;
      a.rotation += b.rotation;
      a.log_scale += b.log_scale;
      a.opacity_logit += b.opacity_logit;
      a.color += b.color;
    }
    pose += o.pose;
  }
};

namespace detail {

inline Eigen::Vector4d rotation_grad(const Quaternion& q_raw, const Eigen::Matrix3d& gr) {
  const double n = std::sqrt(q_raw.w * q_raw.w + q_raw.x * q_raw.x + q_raw.y * q_raw.y + q_raw.z * q_raw.z);
  const Quaternion q = normalized(q_raw);
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Eigen::Vector4d g;
  g[0] = 2 * (-z * gr(0, 1) + y * gr(0, 2) + z * gr(1, 0) - x * gr(1, 2) - y * gr(2, 0) + x * gr(2, 1));
  g[1] = 2 * (y * gr(0, 1) + z * gr(0, 2) + y * gr(1, 0) - 2 * x * gr(1, 1) - w * gr(1, 2) + z * gr(2, 0) +
              w * gr(2, 1) - 2 * x * gr(2, 2));
  g[2] = 2 * (-2 * y * gr(0, 0) + x * gr(0, 1) + w * gr(0, 2) + x * gr(1, 0) + z * gr(1, 2) - w * gr(2, 0) +
              z * gr(2, 1) - 2 * y * gr(2, 2));
  g[3] = 2 * (-2 * z * gr(0, 0) - w * gr(0, 1) + x * gr(0, 2) + w * gr(1, 0) - 2 * z * gr(1, 1) + y * gr(1, 2) +
              x * gr(2, 0) + y * gr(2, 1));
  const Eigen::Vector4d qv(w, x, y, z);
  return (g - qv * qv.dot(g)) / n;
}

} // namespace detail

// Analytic gradients through compositing, projection and covariance. The pose
// gradient keeps only the position term: 2D covariances are held fixed at the
// evaluation pose and only the projected means move.
inline Gradients backward(const RenderTape& tape, const Image& dl_dc) {
  const Camera& cam = tape.camera;
  if (dl_dc.width != cam.width || dl_dc.height != cam.height || dl_dc.channels != 3)
    throw InvalidArgument("backward: gradient image does not match the tape");
  if (tape.cache.size() != tape.scene.size() || tape.offsets.empty())
    throw InvalidArgument("backward: incomplete tape");
  const std::size_t n = tape.scene.size();
  const double alpha_max = tape.options.alpha_max;

  std::vector<Eigen::Vector2d> d_m2(n, Eigen::Vector2d::Zero());
  std::vector<Eigen::Vector3d> d_conic(n, Eigen::Vector3d::Zero()); // (a, b, c) of [[a b][b c]]
  std::vector<double> d_opacity(n, 0.0);
  Gradients out;
  out.gaussians.resize(n);

  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * cam.width + x;
      const double gr = dl_dc.data[3 * p], gg_ = dl_dc.data[3 * p + 1], gb = dl_dc.data[3 * p + 2];
      const double ft = tape.final_transmittance[p];
      double br = ft * tape.background.x(), bgn = ft * tape.background.y(), bb = ft * tape.background.z();
      for (std::size_t e = tape.offsets[p + 1]; e-- > tape.offsets[p];) {
        const TapeEntry& ent = tape.entries[e];
        const int i = ent.gaussian;
        const detail::Splat2D& sp = tape.splats[i];
        const double a = ent.alpha, t = ent.transmittance;
        const double w = a * t;
        out.gaussians[i].color += Eigen::Vector3d(w * gr, w * gg_, w * gb);
        const double inv = 1.0 / (1.0 - a);
        const double d_alpha = gr * (sp.r * t - br * inv) + gg_ * (sp.g * t - bgn * inv) + gb * (sp.b * t - bb * inv);
        br += sp.r * w;
        bgn += sp.g * w;
        bb += sp.b * w;
        if (a >= alpha_max) continue; // clamped: no dependence
        const double dx = x - sp.mx, dy = y - sp.my;
        d_opacity[i] += d_alpha * a / sp.opacity;
        const double d_sigma = -d_alpha * a;
        d_m2[i] -= d_sigma * Eigen::Vector2d(sp.ca * dx + sp.cb * dy, sp.cb * dx + sp.cc * dy);
        d_conic[i] += d_sigma * Eigen::Vector3d(0.5 * dx * dx, dx * dy, 0.5 * dy * dy);
      }
    }
  }

  const Eigen::Matrix3d w2c = rotation_matrix(tape.pose).transpose();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = tape.cache[i];
    if (!c.visible) continue;
    const Gaussian& gs = tape.scene[i];
    GaussianGrad& gg = out.gaussians[i];
    const double o = gs.opacity();
    gg.opacity_logit = d_opacity[i] * o * (1.0 - o);

    const detail::Splat2D& sp = tape.splats[i];
    Eigen::Matrix2d A;
    A << sp.ca, sp.cb, sp.cb, sp.cc;
    Eigen::Matrix2d g_conic;
    g_conic << d_conic[i][0], 0.5 * d_conic[i][1], 0.5 * d_conic[i][1], d_conic[i][2];
    const Eigen::Matrix2d g_sigma2 = -A * g_conic * A;
    const Eigen::Matrix<double, 2, 3> g_jac = 2.0 * g_sigma2 * c.jac * c.sigma_cam;
    const Eigen::Matrix3d g_sigma_cam = c.jac.transpose() * g_sigma2 * c.jac;
    const Eigen::Matrix3d g_sigma = w2c.transpose() * g_sigma_cam * w2c;

    const Eigen::Vector3d s = gs.scale();
    const Eigen::Matrix3d r = quat_to_rot(gs.rotation);
    const Eigen::Matrix3d m = r * s.asDiagonal();
    const Eigen::Matrix3d g_m = 2.0 * g_sigma * m;
    const Eigen::Matrix3d g_r = g_m * s.asDiagonal();
    for (int j = 0; j < 3; ++j) gg.log_scale[j] = g_m.col(j).dot(r.col(j)) * s[j];
    gg.rotation = detail::rotation_grad(gs.rotation, g_r);

    const double px = c.pc.x(), py = c.pc.y(), iz = 1.0 / c.pc.z();
    const double fx = cam.fx, fy = cam.fy;
    const Eigen::Vector2d& dm = d_m2[i];
    const Eigen::Vector3d g_pos(dm.x() * fx * iz, dm.y() * fy * iz,
                                -(dm.x() * fx * px + dm.y() * fy * py) * iz * iz);
    Eigen::Vector3d g_pc = g_pos;
    g_pc.x() += g_jac(0, 2) * (-fx * iz * iz);
    g_pc.y() += g_jac(1, 2) * (-fy * iz * iz);
    g_pc.z() += g_jac(0, 0) * (-fx * iz * iz) + g_jac(0, 2) * (2.0 * fx * px * iz * iz * iz) +
                g_jac(1, 1) * (-fy * iz * iz) + g_jac(1, 2) * (2.0 * fy * py * iz * iz * iz);
    gg.mean = w2c.transpose() * g_pc;

    // T <- T exp(eps) moves camera-frame points to exp(-eps) pc.
    out.pose.head<3>() -= g_pos;
    out.pose.tail<3>() += g_pos.cross(c.pc);
  }
  return out;
}

} // namespace besplat
