// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "msplat/tracking.hpp"

#include "msplat/errors.hpp"
#include "msplat/rasterizer.hpp"

#include <algorithm>
#include <cmath>

namespace msplat {

std::vector<Trajectory3D> track_points(const GaussianCloud& cloud, const MotionModel& model,
                                       const CameraTrajectory& traj,
                                       const std::vector<TrackQuery>& queries,
                                       std::size_t canonical, std::size_t k,
                                       const Vec3& background) {
  if (canonical >= model.frames() || canonical >= traj.size()) {
    throw InvalidArgument("track: canonical frame out of range");
  }
  if (cloud.size() == 0) throw InvalidArgument("track: empty cloud");
  const std::size_t F = model.frames();
  const Camera cam = traj.camera(canonical);
  const Intrinsics& K = cam.intrinsics;
  for (const auto& q : queries) {
    if (!(q.pixel.x() >= 0.0 && q.pixel.y() >= 0.0 && q.pixel.x() <= K.width - 1 &&
          q.pixel.y() <= K.height - 1)) {
      throw InvalidArgument("track: query " + std::to_string(q.id) + " at (" +
                            std::to_string(q.pixel.x()) + ", " + std::to_string(q.pixel.y()) +
                            ") lies outside the " + std::to_string(K.width) + "x" +
                            std::to_string(K.height) + " image");
    }
  }
  const PosedCloud posed = pose_at_time(cloud, model, canonical);
  const RenderTarget rt = render(posed, cam, background);
  const Image depth = rt.normalized_depth(0.05);

  const auto rows = cloud.motion_rows();
  // Per Gaussian and frame: T(t) T(t0)^-1.
  std::vector<std::vector<RigidTransform>> rel(cloud.size());
  auto relative = [&](std::size_t g) -> const std::vector<RigidTransform>& {
    if (rel[g].empty()) {
      rel[g].assign(F, RigidTransform::identity());
      if (rows[g] >= 0) {
        const auto r = static_cast<std::size_t>(rows[g]);
        const RigidTransform inv0 = compose_motion(model.row(r, canonical), model).inverse();
        for (std::size_t t = 0; t < F; ++t) {
          rel[g][t] = compose(compose_motion(model.row(r, t), model), inv0);
        }
      }
    }
    return rel[g];
  };

  if (k == 0) throw InvalidArgument("track: neighbor count must be positive");
  std::vector<Trajectory3D> out;
  for (const auto& q : queries) {
    const int x = static_cast<int>(std::lround(q.pixel.x()));
    const int y = static_cast<int>(std::lround(q.pixel.y()));
    const double z = depth.at(x, y);
    if (!(z > 0.0)) {
      throw InvalidArgument("track: query " + std::to_string(q.id) +
                            " does not hit any reconstructed surface");
    }
    const Vec3 pc((q.pixel.x() - K.cx) / K.fx * z, (q.pixel.y() - K.cy) / K.fy * z, z);
    const Vec3 p0 = cam.extrinsics.pose.rotation.transpose() * (pc - cam.extrinsics.pose.translation);

    // The query moves with the splats that composite into its pixel.
    auto contrib = pixel_contributions(rt, x, y);
    const auto top = std::min(k, contrib.size());
    std::partial_sort(contrib.begin(), contrib.begin() + static_cast<std::ptrdiff_t>(top),
                      contrib.end(), [](const PixelContribution& a, const PixelContribution& b) {
                        return a.weight > b.weight || (a.weight == b.weight && a.index < b.index);
                      });
    contrib.resize(top);
    double wsum = 0.0;
    for (const auto& c : contrib) wsum += c.weight;
    Trajectory3D tr;
    tr.query_id = q.id;
    for (std::size_t t = 0; t < F; ++t) {
      Vec3 p = Vec3::Zero();
      for (const auto& c : contrib) p += (c.weight / wsum) * relative(c.index)[t].apply(p0);
      tr.points.push_back(p);
    }
    out.push_back(std::move(tr));
  }
  return out;
}

double endpoint_error(const std::vector<Trajectory3D>& estimate,
                      const std::vector<Trajectory3D>& truth, std::size_t canonical) {
  if (estimate.size() != truth.size()) {
    throw InvalidArgument("endpoint_error: trajectory counts differ");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& e = estimate[i].points;
    const auto& g = truth[i].points;
    if (e.size() != g.size() || g.empty() || canonical >= g.size()) {
      throw InvalidArgument("endpoint_error: trajectory lengths differ");
    }
    for (std::size_t t : {std::size_t{0}, g.size() - 1}) {
      const Vec3 dg = g[t] - g[canonical];
      if (dg.norm() < 1e-9) continue;
      sum += ((e[t] - e[canonical]) - dg).norm() / dg.norm();
      ++n;
    }
  }
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace msplat
