// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "msplat/errors.hpp"
#include "msplat/optimizer.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace msplat {

using nlohmann::json;

void TrainSchedule::validate() const {
  if (joint_epochs == 0) throw InvalidArgument("schedule: joint_epochs must be positive");
  if (basis_count < MotionModel::kFixedCount) {
    throw InvalidArgument("schedule: basis_count must be >= 6");
  }
  if (init_gaussians == 0) throw InvalidArgument("schedule: init_gaussians must be positive");
  if (!(lr > 0.0)) throw InvalidArgument("schedule: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("schedule: Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw InvalidArgument("schedule: adam_eps must be positive");
  if (!(downsample_factor > 0.0 && downsample_factor <= 1.0)) {
    throw InvalidArgument("schedule: downsample_factor must lie in (0, 1]");
  }
  if (densify && densify_every == 0) {
    throw InvalidArgument("schedule: densify_every must be positive");
  }
  if (!(init_opacity > 0.0 && init_opacity < 1.0)) {
    throw InvalidArgument("schedule: init_opacity must lie in (0, 1)");
  }
  if (track_neighbors == 0) throw InvalidArgument("schedule: track_neighbors must be positive");
  if (workers < 1) throw InvalidArgument("schedule: workers must be >= 1");
  for (double s : {lr_scale.means, lr_scale.rotations, lr_scale.scales, lr_scale.opacities,
                   lr_scale.colors, lr_scale.coeffs, lr_scale.bases}) {
    if (!(s >= 0.0)) throw InvalidArgument("schedule: lr_scale entries must be >= 0");
  }
}

namespace {

json to_json(const FitConfig& cfg) {
  const auto& l = cfg.loss;
  const auto& s = cfg.schedule;
  const auto& r = s.lr_scale;
  return json{
      {"loss",
       {{"w_rgb", l.w_rgb},
        {"w_ssim", l.w_ssim},
        {"w_depth", l.w_depth},
        {"w_track", l.w_track},
        {"w_coeff", l.w_coeff},
        {"lambda_fixed", l.lambda_fixed},
        {"w_smooth", l.w_smooth}}},
      {"schedule",
       {{"init_iters", s.init_iters},
        {"joint_epochs", s.joint_epochs},
        {"lr", s.lr},
        {"adam_betas", {s.beta1, s.beta2}},
        {"adam_eps", s.adam_eps},
        {"downsample_factor", s.downsample_factor},
        {"basis_count", s.basis_count},
        {"init_gaussians", s.init_gaussians},
        {"lr_scale",
         {{"means", r.means},
          {"rotations", r.rotations},
          {"scales", r.scales},
          {"opacities", r.opacities},
          {"colors", r.colors},
          {"coeffs", r.coeffs},
          {"bases", r.bases}}},
        {"densify", s.densify},
        {"densify_every", s.densify_every},
        {"densify_grad_threshold", s.densify_grad_threshold},
        {"densify_size_fraction", s.densify_size_fraction},
        {"prune_opacity", s.prune_opacity},
        {"init_opacity", s.init_opacity},
        {"track_neighbors", s.track_neighbors},
        {"freeze_motion", s.freeze_motion},
        {"background", {s.background.x(), s.background.y(), s.background.z()}},
        {"seed", s.seed},
        {"workers", s.workers}}}};
}

class Reader {
 public:
  Reader(const json& obj, std::string path, const std::string& origin)
      : obj_(obj), path_(std::move(path)), origin_(origin) {
    if (!obj_.is_object()) fail(path_, "expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(path_ + "." + key, "wrong type");
    }
  }

  void get_vec3(const char* key, Vec3& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    const json& a = obj_.at(key);
    if (!a.is_array() || a.size() != 3 || !a[0].is_number() || !a[1].is_number() ||
        !a[2].is_number()) {
      fail(path_ + "." + key, "expected 3 numbers");
    }
    out = Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items()) {
      if (!seen_.count(k)) fail(path_ + "." + k, "unknown key");
    }
  }

  [[noreturn]] void fail(const std::string& where, const std::string& what) const {
    throw ParseError(origin_ + ": " + where + ": " + what);
  }

 private:
  const json& obj_;
  std::string path_;
  const std::string& origin_;
  std::set<std::string> seen_;
};

}  // namespace

std::string serialize_config(const FitConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

FitConfig parse_config(const std::string& text, const FitConfig& base, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(origin + ": " + e.what());
  }
  FitConfig cfg = base;
  Reader top(root, "$", origin);
  if (const json* l = top.child("loss")) {
    Reader r(*l, "$.loss", origin);
    r.get("w_rgb", cfg.loss.w_rgb);
    r.get("w_ssim", cfg.loss.w_ssim);
    r.get("w_depth", cfg.loss.w_depth);
    r.get("w_track", cfg.loss.w_track);
    r.get("w_coeff", cfg.loss.w_coeff);
    r.get("lambda_fixed", cfg.loss.lambda_fixed);
    r.get("w_smooth", cfg.loss.w_smooth);
    r.finish();
  }
  if (const json* s = top.child("schedule")) {
    auto& sc = cfg.schedule;
    Reader r(*s, "$.schedule", origin);
    r.get("init_iters", sc.init_iters);
    r.get("joint_epochs", sc.joint_epochs);
    r.get("lr", sc.lr);
    if (const json* b = r.child("adam_betas")) {
      if (!b->is_array() || b->size() != 2 || !(*b)[0].is_number() || !(*b)[1].is_number()) {
        r.fail("$.schedule.adam_betas", "expected 2 numbers");
      }
      sc.beta1 = (*b)[0].get<double>();
      sc.beta2 = (*b)[1].get<double>();
    }
    r.get("adam_eps", sc.adam_eps);
    r.get("downsample_factor", sc.downsample_factor);
    r.get("basis_count", sc.basis_count);
    r.get("init_gaussians", sc.init_gaussians);
    if (const json* lr = r.child("lr_scale")) {
      Reader q(*lr, "$.schedule.lr_scale", origin);
      q.get("means", sc.lr_scale.means);
      q.get("rotations", sc.lr_scale.rotations);
      q.get("scales", sc.lr_scale.scales);
      q.get("opacities", sc.lr_scale.opacities);
      q.get("colors", sc.lr_scale.colors);
      q.get("coeffs", sc.lr_scale.coeffs);
      q.get("bases", sc.lr_scale.bases);
      q.finish();
    }
    r.get("densify", sc.densify);
    r.get("densify_every", sc.densify_every);
    r.get("densify_grad_threshold", sc.densify_grad_threshold);
    r.get("densify_size_fraction", sc.densify_size_fraction);
    r.get("prune_opacity", sc.prune_opacity);
    r.get("init_opacity", sc.init_opacity);
    r.get("track_neighbors", sc.track_neighbors);
    r.get("freeze_motion", sc.freeze_motion);
    r.get_vec3("background", sc.background);
    r.get("seed", sc.seed);
    r.get("workers", sc.workers);
    r.finish();
  }
  top.finish();
  return cfg;
}

FitConfig parse_config(const std::string& text, const std::string& origin) {
  return parse_config(text, FitConfig{}, origin);
}

FitConfig read_config(const std::filesystem::path& path, const FitConfig& base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), base, path.string());
}

void write_config(const FitConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << serialize_config(cfg);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace msplat
