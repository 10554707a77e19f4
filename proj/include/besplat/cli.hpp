#pragma once

// Command-line front end: synth, train, render and eval. Exit codes are 0 on
// success, 2 for usage and configuration errors, 1 for anything else.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "besplat/checkpoint.hpp"
#include "besplat/io.hpp"
#include "besplat/pipeline.hpp"
#include "besplat/png.hpp"

namespace besplat {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;

inline DatasetConfig read_dataset_config(KeyValues& kv) {
  DatasetConfig c;
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.width = static_cast<int>(kv.get_int("width", c.width));
  c.height = static_cast<int>(kv.get_int("height", c.height));
  c.focal = kv.get_double("focal", c.focal);
  c.n_gaussians = static_cast<int>(kv.get_int("n_gaussians", c.n_gaussians));
  c.extent = kv.get_double("extent", c.extent);
  c.depth = kv.get_double("depth", c.depth);
  try {
    c.model = parse_model(kv.get_string("model", to_string(c.model)));
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  c.motion_rot_deg = kv.get_double("motion_rot_deg", c.motion_rot_deg);
  c.motion_trans_frac = kv.get_double("motion_trans_frac", c.motion_trans_frac);
  c.exposure = kv.get_double("exposure", c.exposure);
  c.threshold = kv.get_double("threshold", c.threshold);
  c.n_steps = static_cast<int>(kv.get_int("n_steps", c.n_steps));
  c.blur_samples = static_cast<int>(kv.get_int("blur_samples", c.blur_samples));
  c.sharp_count = static_cast<int>(kv.get_int("sharp_count", c.sharp_count));
  c.init_rot_deg = kv.get_double("init_rot_deg", c.init_rot_deg);
  c.init_trans_frac = kv.get_double("init_trans_frac", c.init_trans_frac);
  c.point_noise_frac = kv.get_double("point_noise_frac", c.point_noise_frac);
  c.background = kv.get_double("background", c.background);
  kv.reject_unused();
  c.validate();
  return c;
}

inline TrainConfig read_train_config(KeyValues& kv) {
  TrainConfig c;
  c.iterations = static_cast<int>(kv.get_int("iterations", c.iterations));
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.weights.alpha = kv.get_double("alpha", c.weights.alpha);
  c.weights.beta = kv.get_double("beta", c.weights.beta);
  try {
    c.model = parse_model(kv.get_string("model", to_string(c.model)));
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  c.cubic_knots = static_cast<int>(kv.get_int("cubic_knots", c.cubic_knots));
  c.blur_samples = static_cast<int>(kv.get_int("blur_samples", c.blur_samples));
  c.pose_lr_start = kv.get_double("pose_lr_start", c.pose_lr_start);
  c.pose_lr_end = kv.get_double("pose_lr_end", c.pose_lr_end);
  c.scene_lr.position = kv.get_double("lr_position", c.scene_lr.position);
  c.scene_lr.color = kv.get_double("lr_color", c.scene_lr.color);
  c.scene_lr.opacity = kv.get_double("lr_opacity", c.scene_lr.opacity);
  c.scene_lr.scale = kv.get_double("lr_scale", c.scene_lr.scale);
  c.scene_lr.rotation = kv.get_double("lr_rotation", c.scene_lr.rotation);
  c.event_min_fraction = kv.get_double("event_min_fraction", c.event_min_fraction);
  c.knot_jitter = kv.get_double("knot_jitter", c.knot_jitter);
  c.init_scale = kv.get_double("init_scale", c.init_scale);
  c.checkpoint_every = static_cast<int>(kv.get_int("checkpoint_every", c.checkpoint_every));
  kv.reject_unused();
  c.validate();
  return c;
}

inline DatasetConfig load_dataset_config(const std::string& path) {
  if (path.empty()) return {};
  KeyValues kv = KeyValues::load(path);
  return read_dataset_config(kv);
}

inline TrainConfig load_train_config(const std::string& path) {
  if (path.empty()) return {};
  KeyValues kv = KeyValues::load(path);
  return read_train_config(kv);
}

inline std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------- commands

inline void cmd_synth(const std::string& config, const std::filesystem::path& out, std::ostream& log) {
  const DatasetConfig cfg = load_dataset_config(config);
  const ToyDataset d = generate_dataset(cfg);
  save_dataset(out, d);
  log << "dataset = " << out.string() << "\n"
      << "seed = " << cfg.seed << "\n"
      << "resolution = " << cfg.width << "x" << cfg.height << "\n"
      << "gaussians = " << d.scene.size() << "\n"
      << "model = " << to_string(cfg.model) << "\n"
      << "events = " << d.events.events.size() << "\n"
      << "sharp_frames = " << d.sharp.size() << "\n";
}

inline void cmd_train(const std::filesystem::path& data, const std::string& config, const std::filesystem::path& out,
                      const std::string& resume, int until, std::ostream& log) {
  const TrainConfig cfg = load_train_config(config);
  const ToyDataset d = load_dataset(data);
  Checkpoint ck;
  if (resume.empty()) {
    ck.state = initial_state(d, cfg);
  } else {
    ck = load_checkpoint(resume);
    if (ck.state.traj.model != cfg.model) throw ConfigError("resume: checkpoint model differs from the config");
    if (ck.state.iter > cfg.iterations) throw ConfigError("resume: checkpoint is past the configured iterations");
  }
  ck.camera = d.camera;
  ck.background = d.background();
  if (until > cfg.iterations) throw ConfigError("--until exceeds the configured iterations");
  if (until >= 0 && until < ck.state.iter) throw ConfigError("--until is before the checkpoint iteration");

  const auto on_checkpoint = [&](const TrainState& s) {
    char name[32];
    std::snprintf(name, sizeof name, "ckpt_%06d", s.iter);
    save_checkpoint(out / name, Checkpoint{s, ck.camera, ck.background});
  };
  train(ck.state, observation_from(d), cfg, until, on_checkpoint);
  save_checkpoint(out, ck);
  const LossRecord& first = ck.state.history.front();
  const LossRecord& last = ck.state.history.back();
  log << "iterations = " << ck.state.iter << "\n"
      << "initial_loss = " << format_metric(first.total) << "\n"
      << "final_loss = " << format_metric(last.total) << "\n"
      << "skipped_steps = " << ck.state.optim.skipped_steps << "\n"
      << "event_evaluations = " << ck.state.event_evaluations << "\n";
}

inline std::vector<std::filesystem::path> cmd_render(const std::filesystem::path& ckpt, const std::string& time,
                                                     int frames, const std::filesystem::path& out, std::ostream& log) {
  std::vector<double> us;
  std::vector<std::string> names;
  if (time == "sweep") {
    if (frames < 1) throw ConfigError("--frames must be at least 1");
    for (int i = 0; i < frames; ++i) {
      us.push_back(frames == 1 ? 0.0 : static_cast<double>(i) / (frames - 1));
      char name[32];
      std::snprintf(name, sizeof name, "frame_%03d", i);
      names.push_back(name);
    }
  } else {
    char* end = nullptr;
    const double u = std::strtod(time.c_str(), &end);
    if (time.empty() || *end != '\0' || !(u >= 0.0 && u <= 1.0))
      throw ConfigError("--time must be a number in [0, 1] or 'sweep'");
    us.push_back(u);
    names.push_back("frame");
  }
  const Checkpoint ck = load_checkpoint(ckpt);
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec || !std::filesystem::is_directory(out)) throw IoError("cannot create directory '" + out.string() + "'");
  const Trajectory& traj = ck.state.traj;
  std::vector<std::filesystem::path> written;
  for (std::size_t i = 0; i < us.size(); ++i) {
    const double t = us[i] >= 1.0 ? traj.exposure_end : traj.exposure_start + us[i] * traj.exposure_length();
    const Image img = rasterize(ck.state.scene, pose_at(traj, t), ck.camera, ck.background).image;
    write_pfm((out / (names[i] + ".pfm")).string(), img);
    write_png((out / (names[i] + ".png")).string(), img);
    written.push_back(out / (names[i] + ".pfm"));
    log << names[i] << " = " << format_metric(us[i]) << "\n";
  }
  return written;
}

inline EvalReport cmd_eval(const std::filesystem::path& ckpt, const std::filesystem::path& data, std::ostream& out) {
  const ToyDataset d = load_dataset(data);
  if (d.sharp.size() < 2 || static_cast<int>(d.sharp.size()) != d.meta.sharp_count)
    throw ConfigError("dataset is missing sharp reference frames");
  const Checkpoint ck = load_checkpoint(ckpt);
  const EvalReport r = evaluate(ck.state.scene, ck.state.traj, d);
  out << "frames = " << r.frame_psnr.size() << "\n";
  for (std::size_t i = 0; i < r.frame_psnr.size(); ++i) {
    char key[32];
    std::snprintf(key, sizeof key, "%03zu", i);
    out << "psnr_" << key << " = " << format_metric(r.frame_psnr[i]) << "\n";
    out << "ssim_" << key << " = " << format_metric(r.frame_ssim[i]) << "\n";
  }
  out << "psnr_mean = " << format_metric(r.psnr_mean) << "\n"
      << "ssim_mean = " << format_metric(r.ssim_mean) << "\n"
      << "blurry_psnr_mean = " << format_metric(r.blurry_psnr_mean) << "\n"
      << "blurry_ssim_mean = " << format_metric(r.blurry_ssim_mean) << "\n"
      << "rot_rmse_deg = " << format_metric(r.traj.rot_rmse_deg) << "\n"
      << "trans_rmse_frac = " << format_metric(r.traj.trans_rmse_frac) << "\n";
  return r;
}

// ---------------------------------------------------------------- entry point

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Joint deblurring and camera-motion recovery with Gaussian splats and events", "besplat"};
  app.require_subcommand(1);

  std::string config, out_dir, data, resume, ckpt, time;
  int until = -1, frames = 5;

  CLI::App* synth = app.add_subcommand("synth", "Generate a toy dataset");
  synth->add_option("--config", config, "Dataset config (key = value)");
  synth->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* trainc = app.add_subcommand("train", "Recover scene and trajectory from a dataset");
  trainc->add_option("--data", data, "Dataset directory")->required();
  trainc->add_option("--config", config, "Training config (key = value)");
  trainc->add_option("--out", out_dir, "Output checkpoint directory")->required();
  trainc->add_option("--resume", resume, "Checkpoint directory to continue from");
  trainc->add_option("--until", until, "Stop after this iteration");

  CLI::App* render = app.add_subcommand("render", "Render sharp frames along a trained trajectory");
  render->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  render->add_option("--time", time, "Normalised exposure time in [0, 1], or 'sweep'")->required();
  render->add_option("--frames", frames, "Frame count for a sweep");
  render->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* evalc = app.add_subcommand("eval", "Score a checkpoint against a dataset");
  evalc->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  evalc->add_option("--data", data, "Dataset directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* shown = &app;
    for (const CLI::App* sub : app.get_subcommands()) shown = sub;
    out << shown->help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*synth) cmd_synth(config, out_dir, out);
    if (*trainc) cmd_train(data, config, out_dir, resume, until, out);
    if (*render) cmd_render(ckpt, time, frames, out_dir, out);
    if (*evalc) cmd_eval(ckpt, data, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}

} // namespace besplat
