// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
// On-disk scene layout:
//
//   camera.json             shared camera trajectory (see camera.hpp)
//   frames/%05d.png         RGB frames
//   depths/%05d.png         16-bit depth, value * scale from depth_scale.json
//     or depths/%05d.raw    float32 depth in scene units (width*height values)
//   depth_scale.json        {"scale": <scene units per 16-bit step>}
//   tracks.tsv              query_id frame u v visible  (tab separated, header row)
//   masks/%05d.png          optional; >0.5 marks dynamic pixels
//   holdout/views.json      optional; held-out cameras {"views":[{"frame":t,"q":[..],"t":[..]}]}
//   holdout/%05d.png        optional; one image per held-out view
//
#pragma once

#include "msplat/camera.hpp"
#include "msplat/image.hpp"

#include <filesystem>
#include <vector>

namespace msplat {

/// 2D point tracks: positions[q * frames + t] in pixels.
struct TrackSet {
  std::size_t queries = 0;
  std::size_t frames = 0;
  std::vector<Vec2> positions;
  std::vector<std::uint8_t> visible;

  TrackSet() = default;
  TrackSet(std::size_t q, std::size_t f)
      : queries(q), frames(f), positions(q * f, Vec2::Zero()), visible(q * f, 0) {}

  [[nodiscard]] const Vec2& position(std::size_t q, std::size_t t) const { return positions[q * frames + t]; }
  Vec2& position(std::size_t q, std::size_t t) { return positions[q * frames + t]; }
  [[nodiscard]] bool is_visible(std::size_t q, std::size_t t) const { return visible[q * frames + t] != 0; }
  void set_visible(std::size_t q, std::size_t t, bool v) { visible[q * frames + t] = v ? 1 : 0; }
};

/// A camera excluded from training, observed at one of the training times.
struct HeldOutView {
  std::size_t frame = 0;
  Extrinsics pose;
  Image image;
};

struct SceneDataset {
  std::vector<Image> frames;
  std::vector<Image> depths;  // scene units, 0 marks invalid
  TrackSet tracks;
  std::vector<Image> masks;   // empty unless tracking mode
  CameraTrajectory trajectory;
  std::vector<HeldOutView> holdout;

  [[nodiscard]] std::size_t frame_count() const { return frames.size(); }
  /// Throws ValidationError on count or dimension mismatches, non-finite
  /// depth, and visible tracks outside the image.
  void validate() const;
};

enum class DepthFormat { Png16, Raw };

struct DatasetWriteOptions {
  DepthFormat depth_format = DepthFormat::Png16;
  double depth_scale = 1e-4;  // scene units per 16-bit step
};

[[nodiscard]] SceneDataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const SceneDataset& data, const std::filesystem::path& dir,
                  const DatasetWriteOptions& opts = {});

void write_tracks(const TrackSet& tracks, const std::filesystem::path& path);
[[nodiscard]] TrackSet read_tracks(const std::filesystem::path& path, std::size_t frames);

}  // namespace msplat
