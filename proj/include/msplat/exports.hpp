// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
// File formats for fitted state and derived outputs.
//
//   cloud.ply     binary little-endian PLY, one vertex per Gaussian:
//                 float x y z qw qx qy qz s0 s1 s2 opacity r g b, uchar dynamic
//                 (s* are log-scales, opacity is the logit)
//   motion.json   {"basis_count", "frames", "dynamic_count", "twist_order",
//                  "bases_offset", "coeffs_offset", "dtype"}
//   motion.bin    float32 LE: bases [B][6] then coefficients [N_dyn][F][B]
//   tracks_3d.tsv query_id t x y z (tab separated, header row)
//
#pragma once

#include "msplat/image.hpp"
#include "msplat/scene.hpp"

#include <filesystem>
#include <vector>

namespace msplat {

void write_cloud_ply(const GaussianCloud& cloud, const std::filesystem::path& path);
[[nodiscard]] GaussianCloud read_cloud_ply(const std::filesystem::path& path);

/// Writes `<stem>.json` and `<stem>.bin` next to each other; `path` names the json.
void write_motion(const MotionModel& model, const std::filesystem::path& path);
[[nodiscard]] MotionModel read_motion(const std::filesystem::path& path);

/// cloud.ply + motion.json + motion.bin in `dir`.
void save_state(const GaussianCloud& cloud, const MotionModel& model,
                const std::filesystem::path& dir);
struct SceneState {
  GaussianCloud cloud;
  MotionModel model;
};
[[nodiscard]] SceneState load_state(const std::filesystem::path& dir);

struct Trajectory3D {
  std::size_t query_id = 0;
  std::vector<Vec3> points;  // one per frame
};

void export_tracks_3d(const std::vector<Trajectory3D>& tracks, const std::filesystem::path& path);
[[nodiscard]] std::vector<Trajectory3D> read_tracks_3d(const std::filesystem::path& path);

/// `dir/<prefix>%05d.png` for every image.
void export_renders(const std::vector<Image>& images, const std::filesystem::path& dir,
                    const std::string& prefix = "");

}  // namespace msplat
