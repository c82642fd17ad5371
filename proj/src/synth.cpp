// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "msplat/synth.hpp"

#include "msplat/errors.hpp"
#include "msplat/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace msplat {

namespace {

constexpr double kOcclusionTolerance = 0.05;

struct Group {
  Vec3 center;
  double radius;
  Vec3 base_color;
  Twist per_frame;  // twist for one frame step; frame t uses (t - t0) * per_frame
};

std::vector<Group> make_groups(const SynthSpec& spec) {
  std::vector<Group> g;
  switch (spec.motion) {
    case MotionKind::RigidTranslate:
      g.push_back({Vec3::Zero(), 0.45, Vec3(0.8, 0.45, 0.25), Twist{Vec3::Zero(), spec.velocity}});
      break;
    case MotionKind::Rotate:
      g.push_back({Vec3::Zero(), 0.45, Vec3(0.3, 0.7, 0.4),
                   Twist{Vec3(0.0, spec.angular_speed, 0.0), Vec3::Zero()}});
      break;
    case MotionKind::TwoCluster: {
      g.push_back({Vec3(-0.55, 0.0, 0.0), 0.35, Vec3(0.85, 0.4, 0.2),
                   Twist{Vec3::Zero(), Vec3(0.015, -0.01, 0.0)}});
      // Rotation about the group's own center plus a drift.
      const Vec3 c(0.55, 0.0, 0.0);
      const Vec3 w(0.0, 0.03, 0.0);
      g.push_back({c, 0.35, Vec3(0.2, 0.5, 0.85),
                   Twist{w, c.cross(w) + Vec3(-0.005, 0.01, 0.01)}});
      break;
    }
  }
  return g;
}

}  // namespace

MotionKind parse_motion_kind(const std::string& name) {
  if (name == "rigid-translate") return MotionKind::RigidTranslate;
  if (name == "rotate") return MotionKind::Rotate;
  if (name == "two-cluster") return MotionKind::TwoCluster;
  throw InvalidArgument("unknown motion kind '" + name +
                        "' (expected rigid-translate, rotate or two-cluster)");
}

std::string to_string(MotionKind kind) {
  switch (kind) {
    case MotionKind::RigidTranslate: return "rigid-translate";
    case MotionKind::Rotate: return "rotate";
    case MotionKind::TwoCluster: return "two-cluster";
  }
  return "?";
}

Image render_ground_truth(const SyntheticScene& scene, std::size_t t, const Camera& cam) {
  return render(pose_at_time(scene.cloud, scene.model, t), cam, scene.spec.background).rgb;
}

SyntheticScene synth_scene(const SynthSpec& spec) {
  if (spec.n_gaussians == 0) throw InvalidArgument("synth: n_gaussians must be positive");
  if (spec.frames == 0) throw InvalidArgument("synth: frames must be positive");
  if (spec.width < 8 || spec.height < 8) throw InvalidArgument("synth: image too small");
  if (!(spec.focal > 0.0)) throw InvalidArgument("synth: focal must be positive");
  if (spec.pixel_noise < 0.0 || spec.depth_noise < 0.0) {
    throw InvalidArgument("synth: noise levels must be >= 0");
  }

  SyntheticScene out;
  out.spec = spec;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t F = spec.frames;
  const std::size_t t0 = F / 2;
  const auto groups = make_groups(spec);

  // Cloud.
  for (std::size_t i = 0; i < spec.n_gaussians; ++i) {
    const int label = static_cast<int>(i * groups.size() / spec.n_gaussians);
    const Group& grp = groups[static_cast<std::size_t>(label)];
    Vec3 dir(normal(rng), normal(rng), normal(rng));
    dir.normalize();
    const double r = grp.radius * std::cbrt(uni(rng));
    Gaussian g;
    g.mean = grp.center + r * dir;
    Quat4 q(normal(rng), normal(rng), normal(rng), normal(rng));
    g.rotation = q.normalized();
    if (g.rotation[0] < 0.0) g.rotation = -g.rotation;
    for (int k = 0; k < 3; ++k) g.log_scale[k] = std::log(0.04) + uni(rng) * std::log(2.0);
    g.opacity_logit = logit(0.6 + 0.35 * uni(rng));
    for (int k = 0; k < 3; ++k) {
      const double wave = 0.2 * std::sin(4.0 * g.mean[k] + 1.3 * k);
      g.color[k] = std::clamp(grp.base_color[k] + wave + 0.04 * normal(rng), 0.05, 0.95);
    }
    out.cloud.push_back(g, true);
    out.labels.push_back(label);
  }

  // Motion: coefficients on the six fixed generators, linear in (t - t0).
  out.model = MotionModel(spec.n_gaussians, F, MotionModel::kFixedCount);
  for (std::size_t i = 0; i < spec.n_gaussians; ++i) {
    const Vec6 xi = groups[static_cast<std::size_t>(out.labels[i])].per_frame.vector();
    for (std::size_t t = 0; t < F; ++t) {
      const double s = static_cast<double>(t) - static_cast<double>(t0);
      // Fixed order is (tx, ty, tz, rx, ry, rz); twists are (omega, v).
      for (int k = 0; k < 3; ++k) {
        out.model.coeff(i, t, k) = s * xi[3 + k];
        out.model.coeff(i, t, 3 + k) = s * xi[k];
      }
    }
  }

  // Cameras.
  TrajectoryParams tp;
  tp.frames = static_cast<int>(F);
  tp.intrinsics = Intrinsics{spec.focal, spec.focal, spec.width / 2.0, spec.height / 2.0,
                             spec.width, spec.height};
  tp.radius = spec.camera_radius;
  tp.arc_degrees = spec.arc_degrees;
  tp.start = Vec3(0.0, 0.0, -spec.camera_radius);
  tp.direction = Vec3(0.0, 0.0, 1.0);
  tp.distance = 0.1 * spec.camera_radius;
  SceneDataset& data = out.dataset;
  data.trajectory = make_trajectory(spec.camera, tp);

  // Frames and depth.
  std::vector<RenderTarget> clean;
  for (std::size_t t = 0; t < F; ++t) {
    const Camera cam = data.trajectory.camera(t);
    RenderTarget rt = render(pose_at_time(out.cloud, out.model, t), cam, spec.background);
    Image rgb = rt.rgb;
    if (spec.pixel_noise > 0.0) {
      for (double& v : rgb.data) v = std::clamp(v + spec.pixel_noise * normal(rng), 0.0, 1.0);
    }
    Image depth(spec.width, spec.height, 1);
    for (std::size_t p = 0; p < depth.pixel_count(); ++p) {
      const double a = rt.alpha.data[p];
      if (a > 0.5) {
        double z = rt.depth.data[p] / a;
        if (spec.depth_noise > 0.0) z = std::max(1e-3, z + spec.depth_noise * normal(rng));
        depth.data[p] = z;
      }
    }
    data.frames.push_back(std::move(rgb));
    data.depths.push_back(std::move(depth));
    clean.push_back(std::move(rt));
  }

  // Query tracks follow Gaussian means that are unoccluded at the canonical frame.
  const Camera cam0 = data.trajectory.camera(t0);
  const PosedCloud posed0 = pose_at_time(out.cloud, out.model, t0);
  auto unoccluded = [&](const Vec3& pt, std::size_t t, const Camera& cam, Vec2* uv) {
    const Vec3 pc = cam.extrinsics.pose.apply(pt);
    if (pc.z() <= kMinProjectionDepth) return false;
    *uv = project_point(pt, cam.intrinsics, cam.extrinsics).pixel;
    if (!(uv->x() >= 0.0 && uv->y() >= 0.0 && uv->x() <= spec.width - 1 &&
          uv->y() <= spec.height - 1)) {
      return false;
    }
    // Occluded when the rendered surface at the pixel is in front of the point.
    const int px = static_cast<int>(std::lround(uv->x()));
    const int py = static_cast<int>(std::lround(uv->y()));
    const double a = clean[t].alpha.at(px, py);
    return a > 0.5 && std::abs(clean[t].depth.at(px, py) / a - pc.z()) < kOcclusionTolerance;
  };
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < posed0.size(); ++i) {
    Vec2 uv;
    if (unoccluded(posed0.means[i], t0, cam0, &uv)) candidates.push_back(i);
  }
  const std::size_t Q = std::min(spec.queries, candidates.size());
  for (std::size_t i = 0; i < Q; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(rng)]);
  }
  std::vector<std::size_t> chosen(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(Q));
  std::sort(chosen.begin(), chosen.end());

  data.tracks = TrackSet(Q, F);
  for (std::size_t q = 0; q < Q; ++q) {
    const std::size_t g = chosen[q];
    Trajectory3D tr;
    tr.query_id = q;
    for (std::size_t t = 0; t < F; ++t) {
      const Vec3 pt = compose_motion(out.model.row(g, t), out.model).apply(out.cloud.gaussians[g].mean);
      tr.points.push_back(pt);
      const Camera cam = data.trajectory.camera(t);
      Vec2 uv = Vec2::Zero();
      const bool visible = unoccluded(pt, t, cam, &uv);
      if (cam.extrinsics.pose.apply(pt).z() > kMinProjectionDepth) {
        data.tracks.position(q, t) = project_point(pt, cam.intrinsics, cam.extrinsics).pixel;
      }
      data.tracks.set_visible(q, t, visible);
    }
    out.trajectories.push_back(std::move(tr));
    out.query_labels.push_back(out.labels[g]);
  }

  // Held-out cameras at training times, rotated about the target.
  for (std::size_t k = 0; k < spec.holdout_views; ++k) {
    HeldOutView v;
    v.frame = std::min(F - 1, static_cast<std::size_t>((k + 0.5) * F / spec.holdout_views));
    const double deg = (k % 2 == 0 ? 1.0 : -1.0) * spec.holdout_degrees;
    const double a = deg * std::numbers::pi / 180.0;
    const Mat3 Ry = so3_exp(Vec3(0.0, a, 0.0));
    const Vec3 center = Ry * data.trajectory.poses[v.frame].center();
    v.pose = look_at(center, Vec3::Zero());
    v.image = render_ground_truth(out, v.frame, Camera{data.trajectory.intrinsics, v.pose});
    data.holdout.push_back(std::move(v));
  }
  data.validate();
  return out;
}

}  // namespace msplat
