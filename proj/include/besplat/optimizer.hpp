#pragma once

// Joint optimisation of splats and trajectory knots: photometric and event
// losses, their gradients, two Adam instances, and the training loop.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "besplat/errors.hpp"
#include "besplat/image.hpp"
#include "besplat/parallel.hpp"
#include "besplat/renderer.hpp"
#include "besplat/sensor.hpp"
#include "besplat/trajectory.hpp"

namespace besplat {

struct LossWeights {
  double alpha = 1.0;
  double beta = 2.0;

  void validate() const {
    if (!(alpha >= 0.0 && beta >= 0.0 && alpha + beta > 0.0))
      throw ConfigError("loss weights: need alpha >= 0, beta >= 0, alpha + beta > 0");
  }
};

struct SceneLearningRates {
  double position = 1.6e-4;
  double color = 2.5e-3;
  double opacity = 5e-2;
  double scale = 5e-3;
  double rotation = 1e-3;
};

struct TrainConfig {
  int iterations = 2000;
  SceneLearningRates scene_lr;
  double pose_lr_start = 1e-3;
  double pose_lr_end = 1e-5;
  int blur_samples = 19;
  double event_min_fraction = 0.1; // shortest event window as a fraction of the exposure
  std::uint64_t seed = 0;
  LossWeights weights;
  TrajectoryModel model = TrajectoryModel::Bezier7;
  int cubic_knots = 4;
  double knot_jitter = 1e-3; // radians and scene units; breaks the all-knots-equal symmetry at start
  double init_scale = 1.0;   // multiplier on the nearest-neighbour size of the initial splats
  int checkpoint_every = 500;

  void validate() const {
    if (iterations <= 0) throw ConfigError("iterations must be positive");
    if (!(pose_lr_start >= pose_lr_end && pose_lr_end > 0.0)) throw ConfigError("need pose_lr_start >= pose_lr_end > 0");
    if (blur_samples < 1) throw ConfigError("blur_samples must be at least 1");
    if (!(event_min_fraction > 0.0 && event_min_fraction <= 1.0))
      throw ConfigError("event_min_fraction must lie in (0, 1]");
    if (cubic_knots < 4) throw ConfigError("cubic_knots must be at least 4");
    if (!(knot_jitter >= 0.0)) throw ConfigError("knot_jitter must be non-negative");
    if (!(init_scale > 0.0)) throw ConfigError("init_scale must be positive");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
    const SceneLearningRates& s = scene_lr;
    if (!(s.position >= 0 && s.color >= 0 && s.opacity >= 0 && s.scale >= 0 && s.rotation >= 0))
      throw ConfigError("scene learning rates must be non-negative");
    weights.validate();
  }
};

// ---------------------------------------------------------------- losses

inline double photometric_loss(const Image& b, const Image& b_hat) {
  if (!b.same_shape(b_hat)) throw InvalidArgument("photometric_loss: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double d = b_hat.data[i] - b.data[i];
    s += d * d;
  }
  return b.size() ? s / static_cast<double>(b.size()) : 0.0;
}

// d photometric_loss / d b_hat.
inline Image photometric_grad(const Image& b, const Image& b_hat) {
  if (!b.same_shape(b_hat)) throw InvalidArgument("photometric_grad: shape mismatch");
  Image g(b.width, b.height, b.channels);
  const double k = 2.0 / static_cast<double>(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) g.data[i] = k * (b_hat.data[i] - b.data[i]);
  return g;
}

inline void check_event_pair(const EventImage& e, const EventImage& e_hat) {
  if (!e.normalized || !e_hat.normalized) throw ContractViolation("event_loss: inputs must be normalized");
  if (e.width != e_hat.width || e.height != e_hat.height || e.values.size() != e_hat.values.size())
    throw InvalidArgument("event_loss: shape mismatch");
}

inline double event_loss(const EventImage& e_n, const EventImage& e_hat_n) {
  check_event_pair(e_n, e_hat_n);
  double s = 0.0;
  for (std::size_t i = 0; i < e_n.values.size(); ++i) {
    const double d = e_hat_n.values[i] - e_n.values[i];
    s += d * d;
  }
  return e_n.values.empty() ? 0.0 : s / static_cast<double>(e_n.values.size());
}

// d event_loss / d e_hat_n.
inline std::vector<double> event_loss_grad(const EventImage& e_n, const EventImage& e_hat_n) {
  check_event_pair(e_n, e_hat_n);
  std::vector<double> g(e_n.values.size());
  const double k = 2.0 / static_cast<double>(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = k * (e_hat_n.values[i] - e_n.values[i]);
  return g;
}

// Pulls a gradient on e / |e| back to e. The map is not differentiable at
// e = 0; the gradient there is taken as zero.
inline std::vector<double> normalization_backward(const EventImage& raw, const std::vector<double>& g_normalized) {
  const double n = raw.norm();
  std::vector<double> g(g_normalized.size(), 0.0);
  if (!(n > 0.0)) return g;
  double proj = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) proj += raw.values[i] * g_normalized[i];
  proj /= n * n;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (g_normalized[i] - proj * raw.values[i]) / n;
  return g;
}

inline double total_loss(const LossWeights& w, double l_p, double l_e) { return w.alpha * l_p + w.beta * l_e; }

inline double pose_lr(int iter, const TrainConfig& cfg) {
  if (iter < 0 || iter > cfg.iterations) throw RangeError("pose_lr: iteration outside [0, iterations]");
  if (iter == 0) return cfg.pose_lr_start;
  if (iter == cfg.iterations) return cfg.pose_lr_end;
  const double f = static_cast<double>(iter) / static_cast<double>(cfg.iterations);
  return cfg.pose_lr_start * std::pow(cfg.pose_lr_end / cfg.pose_lr_start, f);
}

// ---------------------------------------------------------------- Adam

struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m, v;
  long step = 0;

  void resize(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    step = 0;
  }

  // Advances the moments with `grad` and returns the parameter increments.
  std::vector<double> update(const std::vector<double>& grad, const std::vector<double>& lr) {
    if (m.size() != grad.size()) throw InvalidArgument("adam: gradient size differs from state");
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    std::vector<double> delta(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      delta[i] = -lr[i] * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
    return delta;
  }
};

struct OptimState {
  Adam scene;
  Adam pose;
  long skipped_steps = 0;
};

inline constexpr std::size_t kParamsPerGaussian = 14;

struct TrainingGradients {
  std::vector<GaussianGrad> scene;
  std::vector<Vector6d> knots;

  bool finite() const {
    for (const auto& g : scene)
      if (!g.mean.allFinite() || !g.rotation.allFinite() || !g.log_scale.allFinite() ||
          !std::isfinite(g.opacity_logit) || !g.color.allFinite())
        return false;
    for (const auto& k : knots)
      if (!k.allFinite()) return false;
    return true;
  }
};

inline OptimState make_optim_state(const Scene& scene, const Trajectory& traj) {
  OptimState s;
  s.scene.resize(scene.size() * kParamsPerGaussian);
  s.pose.resize(traj.knots.size() * 6);
  return s;
}

// Layout per splat: mean(3) rotation(4) log_scale(3) opacity_logit(1) color(3).
inline std::vector<double> flatten(const std::vector<GaussianGrad>& grads) {
  std::vector<double> out;
  out.reserve(grads.size() * kParamsPerGaussian);
  for (const auto& g : grads) {
    for (int k = 0; k < 3; ++k) out.push_back(g.mean[k]);
    for (int k = 0; k < 4; ++k) out.push_back(g.rotation[k]);
    for (int k = 0; k < 3; ++k) out.push_back(g.log_scale[k]);
    out.push_back(g.opacity_logit);
    for (int k = 0; k < 3; ++k) out.push_back(g.color[k]);
  }
  return out;
}

inline std::vector<double> scene_learning_rates(std::size_t count, const SceneLearningRates& lr) {
  std::vector<double> out;
  out.reserve(count * kParamsPerGaussian);
  for (std::size_t i = 0; i < count; ++i) {
    out.insert(out.end(), 3, lr.position);
    out.insert(out.end(), 4, lr.rotation);
    out.insert(out.end(), 3, lr.scale);
    out.push_back(lr.opacity);
    out.insert(out.end(), 3, lr.color);
  }
  return out;
}

// One Adam step on both parameter groups. Splats and knots whose increment is
// exactly zero are left untouched, so a zero-gradient step from fresh state
// changes nothing.
inline bool step(Scene& scene, Trajectory& traj, const TrainingGradients& grads, OptimState& state,
                 const TrainConfig& cfg, int iter) {
  if (grads.scene.size() != scene.size() || grads.knots.size() != traj.knots.size())
    throw InvalidArgument("step: gradient sizes do not match the parameters");
  if (!grads.finite()) {
    ++state.skipped_steps;
    return false;
  }
  const std::vector<double> ds = state.scene.update(flatten(grads.scene), scene_learning_rates(scene.size(), cfg.scene_lr));
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const double* d = ds.data() + i * kParamsPerGaussian;
    bool moved = false;
    for (std::size_t k = 0; k < kParamsPerGaussian; ++k) moved = moved || d[k] != 0.0;
    if (!moved) continue;
    Gaussian& g = scene[i];
    for (int k = 0; k < 3; ++k) g.mean[k] += d[k];
    g.rotation = normalized(Quaternion{g.rotation.w + d[3], g.rotation.x + d[4], g.rotation.y + d[5], g.rotation.z + d[6]});
    for (int k = 0; k < 3; ++k) g.log_scale[k] += d[7 + k];
    g.opacity_logit += d[10];
    for (int k = 0; k < 3; ++k) g.color[k] = std::clamp(g.color[k] + d[11 + k], 0.0, 1.0);
  }

  std::vector<double> gp(traj.knots.size() * 6);
  for (std::size_t k = 0; k < traj.knots.size(); ++k)
    for (int j = 0; j < 6; ++j) gp[k * 6 + j] = grads.knots[k][j];
  const std::vector<double> dp = state.pose.update(gp, std::vector<double>(gp.size(), pose_lr(iter, cfg)));
  for (std::size_t k = 0; k < traj.knots.size(); ++k) {
    Twist delta;
    bool moved = false;
    for (int j = 0; j < 6; ++j) {
      delta[j] = dp[k * 6 + j];
      moved = moved || delta[j] != 0.0;
    }
    if (moved) traj.knots[k] = compose(traj.knots[k], exp(delta));
  }
  return true;
}

// ---------------------------------------------------------------- training

struct Observation {
  Image blurry;
  EventStream events;
  Camera camera;
  Eigen::Vector3d background = Eigen::Vector3d::Constant(0.5);

  void validate() const {
    camera.validate();
    if (blurry.width != camera.width || blurry.height != camera.height || blurry.channels != 3)
      throw ConfigError("observation: blurry image does not match the camera");
    if (events.width != camera.width || events.height != camera.height)
      throw ConfigError("observation: event stream resolution does not match the camera");
    if (!(events.threshold > 0.0)) throw ConfigError("observation: contrast threshold must be positive");
  }
};

struct LossRecord {
  int iter = 0;
  double photometric = 0.0;
  double event = 0.0;
  double total = 0.0;
  double pose_lr = 0.0;
};

// Uniform double in [0, 1) from the top 53 bits; independent of the standard
// library's distribution implementations.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::mt19937_64 iteration_rng(std::uint64_t seed, int iter) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(iter), 0x65u};
  return std::mt19937_64(seq);
}

// Event window for one iteration: length uniform in [min_fraction, 1] of the
// exposure, start uniform over the admissible range.
inline std::pair<double, double> event_window(const Trajectory& traj, const TrainConfig& cfg, int iter) {
  std::mt19937_64 rng = iteration_rng(cfg.seed, iter);
  const double span = traj.exposure_length();
  const double len = span * (cfg.event_min_fraction + (1.0 - cfg.event_min_fraction) * unit_uniform(rng));
  const double start = traj.exposure_start + (span - len) * unit_uniform(rng);
  return {start, std::min(start + len, traj.exposure_end)};
}

struct IterationResult {
  LossRecord record;
  TrainingGradients grads;
  Image blur;
  bool event_evaluated = false;
};

inline TrainingGradients zero_gradients(const Scene& scene, const Trajectory& traj) {
  TrainingGradients g;
  g.scene.assign(scene.size(), GaussianGrad{});
  g.knots.assign(traj.knots.size(), Vector6d::Zero());
  return g;
}

inline void accumulate_pose_gradient(TrainingGradients& out, const Trajectory& traj, double t, const Vector6d& g_pose) {
  const std::vector<Matrix6d> jac = knot_jacobians(traj, t);
  for (std::size_t k = 0; k < jac.size(); ++k) out.knots[k] += jac[k].transpose() * g_pose;
}

inline void accumulate_scene_gradient(TrainingGradients& out, const Gradients& g) {
  for (std::size_t i = 0; i < g.gaussians.size(); ++i) {
    GaussianGrad& a = out.scene[i];
    const GaussianGrad& b = g.gaussians[i];
    a.mean += b.mean;
    a.rotation += b.rotation;
    a.log_scale += b.log_scale;
    a.opacity_logit += b.opacity_logit;
    a.color += b.color;
  }
}

// Losses at the current parameters and, if requested, their gradients.
inline IterationResult evaluate_iteration(const Scene& scene, const Trajectory& traj, const Observation& obs,
                                          const TrainConfig& cfg, int iter, bool with_grad,
                                          const RenderOptions& opt = {}) {
  IterationResult res;
  res.record.iter = iter;
  res.record.pose_lr = pose_lr(iter, cfg);
  res.grads = zero_gradients(scene, traj);
  const LossWeights& w = cfg.weights;

  const std::vector<double> times = blur_sample_times(traj, static_cast<std::size_t>(cfg.blur_samples));
  const std::size_t n = times.size();
  std::vector<RenderTape> tapes(n);
  parallel_for(n, [&](std::size_t i) { tapes[i] = rasterize(scene, pose_at(traj, times[i]), obs.camera, obs.background, opt); });
  res.blur = Image(obs.camera.width, obs.camera.height, 3);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < res.blur.size(); ++p) res.blur.data[p] += tapes[i].image.data[p] / static_cast<double>(n);
  res.record.photometric = photometric_loss(obs.blurry, res.blur);

  if (with_grad && w.alpha > 0.0) {
    Image g = photometric_grad(obs.blurry, res.blur);
    for (double& v : g.data) v *= w.alpha / static_cast<double>(n);
    std::vector<Gradients> per(n);
    parallel_for(n, [&](std::size_t i) { per[i] = backward(tapes[i], g); });
    for (std::size_t i = 0; i < n; ++i) {
      accumulate_scene_gradient(res.grads, per[i]);
      accumulate_pose_gradient(res.grads, traj, times[i], per[i].pose);
    }
  }

  if (w.beta > 0.0) {
    res.event_evaluated = true;
    const auto [ti, tj] = event_window(traj, cfg, iter);
    const EventImage observed = normalize_event_image(accumulate_events(obs.events, ti, tj));
    const EventRender er = render_event_image(scene, traj, ti, tj, obs.camera, obs.background, opt);
    const EventImage synthesized = normalize_event_image(er.image);
    res.record.event = event_loss(observed, synthesized);
    if (with_grad) {
      std::vector<double> g_n = event_loss_grad(observed, synthesized);
      for (double& v : g_n) v *= w.beta;
      const std::vector<double> g_raw = normalization_backward(er.image, g_n);
      Image g_end(obs.camera.width, obs.camera.height, 1), g_start(obs.camera.width, obs.camera.height, 1);
      for (std::size_t p = 0; p < g_raw.size(); ++p) {
        g_end.data[p] = g_raw[p] / (er.gray_end.data[p] + kLogEps);
        g_start.data[p] = -g_raw[p] / (er.gray_start.data[p] + kLogEps);
      }
      const RenderTape* tapes2[2] = {&er.tape_start, &er.tape_end};
      const Image rgb[2] = {gray_grad_to_rgb(g_start), gray_grad_to_rgb(g_end)};
      Gradients out2[2];
      parallel_for(2, [&](std::size_t i) { out2[i] = backward(*tapes2[i], rgb[i]); });
      accumulate_scene_gradient(res.grads, out2[0]);
      accumulate_pose_gradient(res.grads, traj, ti, out2[0].pose);
      accumulate_scene_gradient(res.grads, out2[1]);
      accumulate_pose_gradient(res.grads, traj, tj, out2[1].pose);
    }
  }
  res.record.total = total_loss(w, res.record.photometric, res.record.event);
  return res;
}

struct TrainState {
  Scene scene;
  Trajectory traj;
  OptimState optim;
  int iter = 0; // next iteration to run
  std::vector<LossRecord> history;
  long event_evaluations = 0;
};

inline TrainState make_train_state(Scene scene, Trajectory traj) {
  TrainState s;
  s.optim = make_optim_state(scene, traj);
  s.scene = std::move(scene);
  s.traj = std::move(traj);
  return s;
}

using CheckpointFn = std::function<void(const TrainState&)>;

// Runs iterations state.iter .. until-1 (until < 0 means cfg.iterations).
// Each iteration records its loss before stepping; reaching cfg.iterations
// appends one final evaluation row, so a full run has iterations + 1 rows.
inline void train(TrainState& state, const Observation& obs, const TrainConfig& cfg, int until = -1,
                  const CheckpointFn& on_checkpoint = {}, const RenderOptions& opt = {}) {
  cfg.validate();
  obs.validate();
  if (until < 0) until = cfg.iterations;
  if (until > cfg.iterations) throw ConfigError("train: stop iteration exceeds configured iterations");
  if (state.optim.scene.m.size() != state.scene.size() * kParamsPerGaussian ||
      state.optim.pose.m.size() != state.traj.knots.size() * 6)
    throw ConfigError("train: optimiser state does not match the parameters");
  while (state.iter < until) {
    IterationResult r = evaluate_iteration(state.scene, state.traj, obs, cfg, state.iter, true, opt);
    if (r.event_evaluated) ++state.event_evaluations;
    state.history.push_back(r.record);
    step(state.scene, state.traj, r.grads, state.optim, cfg, state.iter);
    ++state.iter;
    if (on_checkpoint && cfg.checkpoint_every > 0 && state.iter % cfg.checkpoint_every == 0 &&
        state.iter < cfg.iterations)
      on_checkpoint(state);
  }
  if (state.iter == cfg.iterations && (state.history.empty() || state.history.back().iter < cfg.iterations)) {
    IterationResult r = evaluate_iteration(state.scene, state.traj, obs, cfg, cfg.iterations, false, opt);
    if (r.event_evaluated) ++state.event_evaluations;
    state.history.push_back(r.record);
  }
}

} // namespace besplat
