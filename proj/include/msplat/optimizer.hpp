// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Initialization, Adam and the two-phase training schedule.
//
// Phase 1 pre-fits motion (coefficients and trainable bases) against depth and
// tracks. Phase 2 downsamples the dynamic Gaussians once, then optimizes every
// parameter with the full loss, one frame per step, with density control in
// its first half.
//
#pragma once

#include "msplat/dataset.hpp"
#include "msplat/losses.hpp"
#include "msplat/rasterizer.hpp"
#include "msplat/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace msplat {

/// Multipliers on the base learning rate, one per parameter group.
struct LearningRateScale {
  double means = 1.0;
  double rotations = 1.0;
  double scales = 1.0;
  double opacities = 1.0;
  double colors = 1.0;
  double coeffs = 1.0;
  double bases = 1.0;
};

struct TrainSchedule {
  std::size_t init_iters = 1000;
  std::size_t joint_epochs = 600;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-15;
  double downsample_factor = 0.5;
  std::size_t basis_count = 15;
  std::size_t init_gaussians = 50000;

  LearningRateScale lr_scale;
  std::size_t densify_every = 200;
  bool densify = true;
  double densify_grad_threshold = 2e-4;
  double densify_size_fraction = 0.01;  // of the scene extent
  double prune_opacity = 5e-3;
  double init_opacity = 0.1;
  std::size_t track_neighbors = 8;
  /// Ablation: no trainable bases and coefficients frozen at zero.
  bool freeze_motion = false;
  Vec3 background = Vec3::Zero();
  std::uint64_t seed = 0;
  int workers = 1;

  /// Throws InvalidArgument on zero counts, non-positive lr or bad factors.
  void validate() const;
};

struct FitConfig {
  LossConfig loss;
  TrainSchedule schedule;

  void validate() const {
    loss.validate();
    schedule.validate();
  }
};

/// JSON round trip of FitConfig. Unknown keys are rejected with ParseError.
[[nodiscard]] std::string serialize_config(const FitConfig& cfg);
[[nodiscard]] FitConfig parse_config(const std::string& text, const std::string& origin = "<memory>");
/// Fields present in `text` override `base`.
[[nodiscard]] FitConfig parse_config(const std::string& text, const FitConfig& base,
                                     const std::string& origin = "<memory>");
[[nodiscard]] FitConfig read_config(const std::filesystem::path& path, const FitConfig& base = {});
void write_config(const FitConfig& cfg, const std::filesystem::path& path);

/// First and second moments for one flat parameter group.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t steps = 0;

  void resize(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    steps = 0;
  }
  /// Keeps the moments of entry `origin[k] * stride + j` for every k and j < stride.
  void gather(std::span<const std::size_t> origin, std::size_t stride);
};

/// One bias-corrected Adam update. A step whose gradients are all zero leaves
/// both the parameters and the state untouched.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, double beta1, double beta2, double eps);

/// Index of the canonical frame for a clip of F frames.
[[nodiscard]] inline std::size_t canonical_frame(std::size_t frames) { return frames / 2; }

/// Back-projects the canonical frame's depth into at most `n` Gaussians.
/// Pixels with depth <= 0 are skipped; with masks, pixels whose mask is 0
/// become static. Throws ValidationError when the frame has no valid depth.
[[nodiscard]] GaussianCloud init_cloud(const SceneDataset& data, std::size_t n,
                                       double init_opacity = 0.1, std::uint64_t seed = 0);

/// Mean distance of every point to its k nearest neighbours.
[[nodiscard]] std::vector<double> knn_mean_distance(const std::vector<Vec3>& points, std::size_t k);

struct KMeansResult {
  std::vector<std::size_t> labels;
  std::vector<Eigen::VectorXd> centers;
};

/// k-means++ seeding followed by Lloyd iterations.
[[nodiscard]] KMeansResult kmeans(const std::vector<Eigen::VectorXd>& features, std::size_t k,
                                  std::uint64_t seed, std::size_t max_iters = 100);

struct MotionInit {
  MotionModel model;
  KMeansResult clusters;
  std::vector<std::size_t> track_ids;  // tracks used, in feature order
  double tau = 0.0;
  bool fallback = false;  // too few tracks; zero init
  std::string warning;
};

/// Seeds trainable bases and coefficients from tracks lifted to 3D.
[[nodiscard]] MotionInit init_motion(const SceneDataset& data, const GaussianCloud& cloud,
                                     std::size_t basis_count, std::uint64_t seed = 0);

struct EpochLog {
  std::size_t epoch = 0;   // 0 for the end of phase 1
  LossTerms terms;         // mean over the epoch's steps
  double psnr = 0.0;       // held-out views, or training frames when none exist
  double ssim = 0.0;
  std::size_t gaussians = 0;
};

[[nodiscard]] std::string metrics_csv_header();
[[nodiscard]] std::string metrics_csv_row(const EpochLog& log);

struct FitResult {
  GaussianCloud cloud;
  MotionModel model;
  std::vector<EpochLog> log;
  std::vector<std::string> warnings;
};

struct FitHooks {
  std::function<void(const EpochLog&)> on_epoch;
  /// Where the state is written when the loss diverges; empty disables the dump.
  std::filesystem::path dump_dir;
};

[[nodiscard]] FitResult fit(const SceneDataset& data, const FitConfig& cfg,
                            const FitHooks& hooks = {});

struct Evaluation {
  double psnr = 0.0;
  double ssim = 0.0;
};

/// Mean PSNR/SSIM over held-out views, or over training frames when the
/// dataset has none.
[[nodiscard]] Evaluation evaluate(const GaussianCloud& cloud, const MotionModel& model,
                                  const SceneDataset& data, const Vec3& background,
                                  int workers = 1);

}  // namespace msplat
