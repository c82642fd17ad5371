// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Pinhole cameras, per-pixel rays and their Pluecker embedding, and the
// trajectory file shared between the video generator and reconstruction.
//
// Convention: extrinsics map world -> camera, camera looks down +Z with +X
// right and +Y down. Pixel (u, v) refers to integer pixel coordinates that go
// through (cx, cy) unchanged; no half-pixel offset is applied.
//
#pragma once

#include "msplat/se3.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace msplat {

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  /// Throws ValidationError when fx, fy <= 0 or the principal point lies outside the image.
  void validate() const;
  [[nodiscard]] Mat3 matrix() const;
};

struct Extrinsics {
  RigidTransform pose;  // world -> camera

  [[nodiscard]] Vec3 center() const { return -(pose.rotation.transpose() * pose.translation); }
};

struct Camera {
  Intrinsics intrinsics;
  Extrinsics extrinsics;
};

struct CameraTrajectory {
  Intrinsics intrinsics;
  std::vector<Extrinsics> poses;
  double frame_rate = 24.0;

  [[nodiscard]] std::size_t size() const { return poses.size(); }
  [[nodiscard]] Camera camera(std::size_t frame) const;
  void validate() const;
};

struct Projection {
  Vec2 pixel;
  double depth = 0.0;
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
};

/// Planar 6 x h x w grid; channels 0-2 are the moment o x d, 3-5 the direction d.
struct PlueckerMap {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  [[nodiscard]] double at(int channel, int row, int col) const {
    return data[(static_cast<std::size_t>(channel) * height + row) * width + col];
  }
  double& at(int channel, int row, int col) {
    return data[(static_cast<std::size_t>(channel) * height + row) * width + col];
  }
};

inline constexpr double kMinProjectionDepth = 1e-6;

/// Throws InvalidArgument when the camera-frame depth is <= 1e-6.
[[nodiscard]] Projection project_point(const Vec3& x, const Intrinsics& K, const Extrinsics& E);

[[nodiscard]] Ray pixel_ray(double u, double v, const Intrinsics& K, const Extrinsics& E);

[[nodiscard]] PlueckerMap plucker_embed(const Intrinsics& K, const Extrinsics& E);

/// World -> camera pose of a camera at `center` looking at `target`; image
/// "up" follows `up` (default -Y, matching the +Y-down image convention).
[[nodiscard]] Extrinsics look_at(const Vec3& center, const Vec3& target,
                                 const Vec3& up = Vec3(0.0, -1.0, 0.0));

enum class TrajectoryKind { Orbit, Dolly, Arc, Static };

[[nodiscard]] TrajectoryKind parse_trajectory_kind(const std::string& name);
[[nodiscard]] std::string to_string(TrajectoryKind kind);

struct TrajectoryParams {
  int frames = 80;
  double frame_rate = 24.0;
  Intrinsics intrinsics;
  Vec3 target = Vec3::Zero();
  /// orbit/arc: distance from target; static: distance along -Z from target.
  double radius = 2.0;
  /// arc: total swept angle, centered on the -Z side of the target.
  double arc_degrees = 30.0;
  /// orbit/arc: height offset of the camera centers along -Y.
  double elevation = 0.0;
  /// dolly: start center, unit direction of travel, distance travelled.
  Vec3 start = Vec3(0.0, 0.0, -2.0);
  Vec3 direction = Vec3(0.0, 0.0, 1.0);
  double distance = 1.0;
};

/// Throws InvalidArgument for non-positive frame counts, radius or distance.
[[nodiscard]] CameraTrajectory make_trajectory(TrajectoryKind kind, const TrajectoryParams& params);

/// Writes `camera.json`. Doubles are written with 17 significant digits.
void write_trajectory(const CameraTrajectory& traj, const std::filesystem::path& path);

/// Accepts per-frame poses as {"q":[w,x,y,z],"t":[...]} or {"R":[9 row-major],"t":[...]}.
/// Throws ParseError (with line or field) on malformed input and ValidationError
/// on rotations off SO(3) by more than 1e-4.
[[nodiscard]] CameraTrajectory read_trajectory(const std::filesystem::path& path);
[[nodiscard]] CameraTrajectory parse_trajectory(const std::string& text,
                                                const std::string& origin = "<memory>");
[[nodiscard]] std::string serialize_trajectory(const CameraTrajectory& traj);

/// Raw little-endian float32 planar 6xhxw per frame (`plucker_%05d.f32`) plus a
/// `plucker.json` sidecar describing the shape.
void export_plucker(const CameraTrajectory& traj, const std::filesystem::path& dir);

inline constexpr const char* kTrajectoryConvention =
    "world_to_camera;x_right,y_down,z_forward;q=wxyz;twist=omega_v";

}  // namespace msplat
