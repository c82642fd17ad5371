// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic ground-truth scenes rendered with the project's own rasterizer.
//
// Gaussians are placed in one or two spherical blobs around the origin; their
// motion is expressed exactly with fixed-generator coefficients, linear in
// (t - t0). Query tracks follow Gaussian means that are unoccluded at the
// canonical frame; a track is visible where its mean is in view and unoccluded.
//
#pragma once

#include "msplat/camera.hpp"
#include "msplat/dataset.hpp"
#include "msplat/exports.hpp"
#include "msplat/scene.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace msplat {

enum class MotionKind { RigidTranslate, Rotate, TwoCluster };

[[nodiscard]] MotionKind parse_motion_kind(const std::string& name);
[[nodiscard]] std::string to_string(MotionKind kind);

struct SynthSpec {
  std::size_t n_gaussians = 200;
  std::size_t frames = 16;
  int width = 128;
  int height = 96;
  double focal = 110.0;
  MotionKind motion = MotionKind::TwoCluster;
  TrajectoryKind camera = TrajectoryKind::Arc;
  double camera_radius = 3.0;
  double arc_degrees = 20.0;
  /// rigid-translate: per-frame translation.
  Vec3 velocity = Vec3(0.1, 0.0, 0.0);
  /// rotate: per-frame rotation about the world Y axis (radians).
  double angular_speed = 0.03;
  double pixel_noise = 0.0;  // std-dev of additive RGB noise
  double depth_noise = 0.0;  // std-dev of additive depth noise, scene units
  std::size_t queries = 64;
  std::size_t holdout_views = 4;
  double holdout_degrees = 4.0;  // held-out cameras orbit this far from the training pose
  Vec3 background = Vec3::Zero();
  std::uint64_t seed = 0;
};

struct SyntheticScene {
  GaussianCloud cloud;
  MotionModel model;
  std::vector<int> labels;                // rigid group of every Gaussian
  SceneDataset dataset;
  std::vector<Trajectory3D> trajectories; // ground-truth 3D path of every track query
  std::vector<int> query_labels;
  SynthSpec spec;
};

/// Throws InvalidArgument on an invalid spec.
[[nodiscard]] SyntheticScene synth_scene(const SynthSpec& spec);

/// Renders the ground truth at frame t through camera `cam`.
[[nodiscard]] Image render_ground_truth(const SyntheticScene& scene, std::size_t t,
                                        const Camera& cam);

}  // namespace msplat
