// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Canonical Gaussian cloud and the hybrid motion-basis model.
//
// A dynamic Gaussian i at frame t moves by
//   T(i, t) = exp( sum_b coeff(i, t, b) * basis_b )
// where the first six bases are the frozen SE(3) generators and the rest are
// trainable twists shared by all Gaussians. Static Gaussians never move.
//
#pragma once

#include "msplat/se3.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace msplat {

struct Gaussian {
  Vec3 mean = Vec3::Zero();                    // canonical-frame mean
  Quat4 rotation = Quat4(1.0, 0.0, 0.0, 0.0);  // (w, x, y, z)
  Vec3 log_scale = Vec3::Constant(-3.0);
  double opacity_logit = 0.0;
  Vec3 color = Vec3::Constant(0.5);

  [[nodiscard]] Vec3 scale() const { return log_scale.array().exp(); }
  [[nodiscard]] double opacity() const;
  [[nodiscard]] Mat3 rotation_matrix() const { return quat_to_matrix(rotation); }
};

[[nodiscard]] double sigmoid(double x);
[[nodiscard]] double logit(double p);

struct GaussianCloud {
  std::vector<Gaussian> gaussians;
  std::vector<std::uint8_t> dynamic_mask;

  [[nodiscard]] std::size_t size() const { return gaussians.size(); }
  [[nodiscard]] bool is_dynamic(std::size_t i) const { return dynamic_mask[i] != 0; }
  [[nodiscard]] std::size_t dynamic_count() const;
  /// For each Gaussian, its coefficient row in the motion model, or -1 if static.
  [[nodiscard]] std::vector<std::ptrdiff_t> motion_rows() const;
  void push_back(const Gaussian& g, bool dynamic);
  /// Throws ValidationError on size mismatches, non-unit quaternions or
  /// scales outside (1e-6, 1e3).
  void validate() const;
};

class MotionModel {
 public:
  static constexpr std::size_t kFixedCount = FixedGeneratorSet::kSize;

  MotionModel() = default;
  /// Throws InvalidArgument when basis_count < 6 or frames == 0.
  MotionModel(std::size_t n_dynamic, std::size_t frames, std::size_t basis_count);

  [[nodiscard]] std::size_t dynamic_count() const { return n_dynamic_; }
  [[nodiscard]] std::size_t frames() const { return frames_; }
  [[nodiscard]] std::size_t basis_count() const { return basis_count_; }
  [[nodiscard]] std::size_t trainable_count() const { return basis_count_ - kFixedCount; }

  [[nodiscard]] const FixedGeneratorSet& fixed() const { return fixed_; }
  [[nodiscard]] const std::vector<Twist>& trainable() const { return trainable_; }
  [[nodiscard]] std::vector<Twist>& trainable() { return trainable_; }
  /// Basis b in combined order: fixed generators first, then trainable.
  [[nodiscard]] const Twist& basis(std::size_t b) const;

  [[nodiscard]] std::span<const double> row(std::size_t i, std::size_t t) const;
  [[nodiscard]] std::span<double> row(std::size_t i, std::size_t t);
  [[nodiscard]] double coeff(std::size_t i, std::size_t t, std::size_t b) const;
  double& coeff(std::size_t i, std::size_t t, std::size_t b);

  [[nodiscard]] const std::vector<double>& coeffs() const { return coeffs_; }
  [[nodiscard]] std::vector<double>& coeffs() { return coeffs_; }

  /// Model whose rows are copies of `rows` of this one (same bases).
  [[nodiscard]] MotionModel gather_rows(std::span<const std::size_t> rows) const;

 private:
  FixedGeneratorSet fixed_;
  std::vector<Twist> trainable_;
  std::vector<double> coeffs_;  // [n_dynamic][frames][basis_count]
  std::size_t n_dynamic_ = 0;
  std::size_t frames_ = 0;
  std::size_t basis_count_ = MotionModel::kFixedCount;
};

/// World-space Gaussians for one frame.
struct PosedCloud {
  std::size_t frame = 0;
  std::vector<Vec3> means;
  std::vector<Mat3> rotations;
  std::vector<Vec3> log_scales;
  std::vector<double> opacity_logits;
  std::vector<Vec3> colors;

  [[nodiscard]] std::size_t size() const { return means.size(); }
};

/// xi = sum_b row[b] * basis_b.
[[nodiscard]] Twist motion_twist(std::span<const double> coeff_row, const MotionModel& model);
[[nodiscard]] RigidTransform compose_motion(std::span<const double> coeff_row,
                                            const MotionModel& model);

[[nodiscard]] PosedCloud pose_at_time(const GaussianCloud& cloud, const MotionModel& model,
                                      std::size_t t);

/// Result of any operation that adds or removes Gaussians. `origin[k]` is the
/// index in the input cloud that new Gaussian k was derived from.
struct ResampledScene {
  GaussianCloud cloud;
  MotionModel model;
  std::vector<std::size_t> origin;
};

/// Keeps ceil(N_dyn * factor) dynamic Gaussians chosen uniformly at random;
/// static Gaussians are untouched and the input order is preserved.
[[nodiscard]] ResampledScene downsample(const GaussianCloud& cloud, const MotionModel& model,
                                        double factor, std::uint64_t seed = 0);

struct DensifyOptions {
  double grad_threshold = 2e-4;   // mean screen-space gradient, NDC units
  double size_threshold = 0.01;   // absolute, usually 1% of scene extent
  double prune_opacity = 5e-3;
  std::uint64_t seed = 0;
};

struct DensifyStats {
  std::vector<double> grad_norm;  // mean screen-space gradient per Gaussian
  std::vector<Vec3> mean_grad;    // accumulated dL/dmean, used to orient clones
};

/// Clone small high-gradient Gaussians, split large ones into two children
/// with scale / 1.6, prune low-opacity ones. Children copy coefficient rows.
[[nodiscard]] ResampledScene densify_and_prune(const GaussianCloud& cloud,
                                               const MotionModel& model,
                                               const DensifyStats& stats,
                                               const DensifyOptions& opts);

/// World-space mean of a dynamic Gaussian for every frame. Throws
/// InvalidArgument for static or out-of-range indices.
[[nodiscard]] std::vector<Vec3> track_gaussian(std::size_t index, const MotionModel& model,
                                               const GaussianCloud& cloud);

/// Axis-aligned bounding-box diagonal of the canonical means.
[[nodiscard]] double scene_extent(const GaussianCloud& cloud);

}  // namespace msplat
