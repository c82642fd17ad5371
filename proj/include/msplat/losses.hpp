// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Training objective:
//
//   total = w_rgb   * L1(rgb)
//         + w_ssim  * (1 - SSIM(rgb))
//         + w_depth * L1(alpha-normalized depth, pixels with alpha > 0.5 and valid target)
//         + w_track * mean reprojection error of track-carried query points (normalized by max(w, h))
//         + w_coeff * mean_{i,t} [ lambda * sum_fixed c^2 + (1 - lambda) * sum_trainable c^2 ]
//         + w_smooth * mean_{i,t<F-1} || c[i,t+1,:] - c[i,t,:] ||^2
//
#pragma once

#include "msplat/camera.hpp"
#include "msplat/dataset.hpp"
#include "msplat/rasterizer.hpp"
#include "msplat/scene.hpp"

#include <span>
#include <string>
#include <vector>

namespace msplat {

struct LossConfig {
  double w_rgb = 1.0;
  double w_ssim = 0.2;
  double w_depth = 0.5;
  double w_track = 2.0;
  double w_coeff = 0.1;
  double lambda_fixed = 0.8;
  double w_smooth = 0.1;

  /// Throws InvalidArgument on negative weights or lambda outside [0, 1].
  void validate() const;
};

struct LossTerms {
  double rgb = 0.0;
  double ssim = 0.0;   // weighted (1 - SSIM)
  double depth = 0.0;
  double track = 0.0;
  double coeff = 0.0;
  double smooth = 0.0;
  double total = 0.0;

  LossTerms& operator+=(const LossTerms& o);
  LossTerms& operator/=(double d);
};

/// lambda * sum_fixed c^2 + (1 - lambda) * sum_trainable c^2 for one row.
[[nodiscard]] double motion_coeff_penalty(std::span<const double> row, double lambda_fixed);

/// Mean penalty over all rows and frames; adds w * d/dc into `grad` when non-null.
double coeff_regularizer(const MotionModel& model, double lambda_fixed, double weight,
                         std::vector<double>* grad);

/// Mean squared frame-to-frame coefficient difference; adds w * d/dc into `grad`.
double smoothness_regularizer(const MotionModel& model, double weight, std::vector<double>* grad);

/// One query bound to K canonical Gaussians. The lifted query point moves with
/// the weighted blend of their motions: x(t) = sum_k w_k T_k(t) anchor.
struct TrackBinding {
  static constexpr std::size_t kStatic = static_cast<std::size_t>(-1);

  std::size_t query = 0;
  Vec3 anchor = Vec3::Zero();      // query lifted at the canonical frame
  std::vector<std::size_t> gaussians;
  std::vector<std::size_t> rows;   // motion rows of `gaussians`, kStatic for static ones
  std::vector<double> weights;     // sum to 1
};

/// Binds every query visible at the canonical frame to the K splats with the
/// largest blending weight at its pixel in a render of the canonical frame.
/// Queries on empty pixels fall back to the K nearest means, weighted by
/// inverse distance to the query lifted with the canonical depth. Queries
/// without valid depth are skipped.
[[nodiscard]] std::vector<TrackBinding> bind_tracks(const TrackSet& tracks,
                                                    const std::vector<Image>& depths,
                                                    const CameraTrajectory& traj,
                                                    const GaussianCloud& cloud,
                                                    const MotionModel& model,
                                                    std::size_t canonical_frame,
                                                    std::size_t k = 8);

/// Weighted track term at one frame. Gradients go to the coefficient tensor
/// and the trainable bases when the pointers are non-null.
double track_loss(const MotionModel& model, const Camera& camera, const TrackSet& tracks,
                  const std::vector<TrackBinding>& bindings, std::size_t frame, double weight,
                  std::vector<double>* grad_coeffs, std::vector<Vec6>* grad_bases);

struct ImageLoss {
  LossTerms terms;
  Image d_rgb;
  Image d_depth;
  Image d_alpha;
};

/// RGB, SSIM and depth terms with their gradient seeds. `target_depth` may be
/// null (no depth supervision). With `rgb_terms` false only depth is used.
[[nodiscard]] ImageLoss image_loss(const RenderTarget& rendered, const Image* target_rgb,
                                   const Image* target_depth, const LossConfig& cfg,
                                   bool rgb_terms = true);

struct FrameInputs {
  const Image* rgb = nullptr;
  const Image* depth = nullptr;
  const TrackSet* tracks = nullptr;
  const std::vector<TrackBinding>* bindings = nullptr;
  bool rgb_terms = true;
};

/// Full per-step loss.
struct LossResult {
  LossTerms terms;
  Image d_rgb;
  Image d_depth;
  Image d_alpha;
  std::vector<double> d_coeffs;  // full tensor, track and regularizers
  std::vector<Vec6> d_bases;     // trainable bases, track term
};

/// Evaluates every term for one rendered frame. Throws DivergenceError naming
/// the first non-finite term.
[[nodiscard]] LossResult loss(const RenderTarget& rendered, const PosedCloud& posed,
                              const Camera& camera, const FrameInputs& frame,
                              const MotionModel& model, const LossConfig& cfg);

}  // namespace msplat
