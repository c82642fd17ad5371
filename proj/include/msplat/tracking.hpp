// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
// 3D tracking of query pixels through a fitted scene.
//
// A query pixel at the canonical frame is lifted with the rendered depth, then
// carried through time by the motion of the K splats with the largest blending
// weight at that pixel: x(t) = sum_k w_k T_k(t) T_k(t0)^-1 x(t0), with w_k the
// normalized blending weights. Static Gaussians contribute the identity.
//
#pragma once

#include "msplat/camera.hpp"
#include "msplat/exports.hpp"
#include "msplat/scene.hpp"

#include <vector>

namespace msplat {

struct TrackQuery {
  std::size_t id = 0;
  Vec2 pixel = Vec2::Zero();
};

/// Throws InvalidArgument for pixels outside the image or without rendered
/// surface (accumulated alpha below 0.05).
[[nodiscard]] std::vector<Trajectory3D> track_points(const GaussianCloud& cloud,
                                                     const MotionModel& model,
                                                     const CameraTrajectory& traj,
                                                     const std::vector<TrackQuery>& queries,
                                                     std::size_t canonical, std::size_t k = 8,
                                                     const Vec3& background = Vec3::Zero());

/// Mean over trajectories of |(p_hat(t) - p_hat(t0)) - (p(t) - p(t0))| / |p(t) - p(t0)|
/// at t = 0 and t = F - 1; endpoints with ground-truth displacement below 1e-9
/// are skipped.
[[nodiscard]] double endpoint_error(const std::vector<Trajectory3D>& estimate,
                                    const std::vector<Trajectory3D>& truth, std::size_t canonical);

}  // namespace msplat
