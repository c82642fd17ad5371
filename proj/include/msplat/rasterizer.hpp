// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Tiled CPU splatting rasterizer with an analytic backward pass.
//
// Forward, per pixel p and depth-sorted splats i:
//   alpha_i = min(alpha_max, o_i * K(m_i^2)),  m_i^2 = (p - mu_i)^T Sigma_i^-1 (p - mu_i)
//   rgb     = sum_i T_i alpha_i c_i + T_final * background
//   depth   = sum_i T_i alpha_i z_i            (not normalized by alpha)
// with T_i = prod_{j<i} (1 - alpha_j). K is the Gaussian falloff shifted so that
// it reaches zero at the cutoff radius (3 sigma by default):
//   K(m^2) = (exp(-m^2/2) - exp(-r^2/2)) / (1 - exp(-r^2/2))  for m < r, else 0
// which keeps alpha continuous where a splat's support ends.
//
#pragma once

#include "msplat/camera.hpp"
#include "msplat/image.hpp"
#include "msplat/scene.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace msplat {

struct RenderOptions {
  int tile_size = 16;
  double cov_floor = 0.3;          // pixel^2 added to the projected covariance
  double alpha_max = 0.99;
  double min_transmittance = 1e-4;
  double near_plane = 0.01;
  double cutoff_sigma = 3.0;
  int workers = 1;
};

/// Falloff kernel and its derivative w.r.t. m^2.
[[nodiscard]] double splat_kernel(double m2, double cutoff_sigma);
[[nodiscard]] double splat_kernel_d_m2(double m2, double cutoff_sigma);

struct Splat2D {
  Vec2 mean;        // pixels
  Mat2 cov;         // pixels^2, floor included
  Mat2 conic;       // cov^-1
  double depth = 0.0;
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
  std::size_t source_index = 0;

  // Intermediates kept for the backward pass.
  Vec3 cam_mean = Vec3::Zero();
  Mat3 cov3d = Mat3::Zero();
  Eigen::Matrix<double, 2, 3> jacobian = Eigen::Matrix<double, 2, 3>::Zero();
  // Pixel bounding box of the cutoff ellipse (inclusive).
  int x_min = 0, x_max = -1, y_min = 0, y_max = -1;
};

/// Projects one world-space Gaussian. Returns nullopt when its camera-frame
/// depth is at or below the near plane (the Gaussian is culled).
[[nodiscard]] std::optional<Splat2D> project_gaussian(const Vec3& mean, const Mat3& rotation,
                                                      const Vec3& log_scale, double opacity_logit,
                                                      const Vec3& color, const Camera& camera,
                                                      const RenderOptions& opts = {});

struct RenderAux;

struct RenderTarget {
  Image rgb;    // h x w x 3
  Image depth;  // h x w, alpha-weighted
  Image alpha;  // h x w, accumulated opacity
  std::shared_ptr<const RenderAux> aux;

  /// depth / alpha where alpha > min_alpha, else 0.
  [[nodiscard]] Image normalized_depth(double min_alpha = 1e-6) const;
};

/// Partials w.r.t. the world-space (posed) parameters of one frame.
struct PosedGradients {
  std::vector<Vec3> means;
  std::vector<Mat3> rotations;  // dL/dR, unconstrained 3x3
  std::vector<Vec3> log_scales;
  std::vector<double> opacity_logits;
  std::vector<Vec3> colors;
  std::vector<Vec2> means2d;    // dL/d(pixel mean), for density control
  std::vector<std::uint8_t> visible;

  explicit PosedGradients(std::size_t n = 0);
  [[nodiscard]] std::size_t size() const { return means.size(); }
};

/// Partials w.r.t. canonical parameters and the motion model for one frame.
struct GradientBuffer {
  std::size_t frame = 0;
  std::vector<Vec3> means;
  std::vector<Quat4> rotations;
  std::vector<Vec3> log_scales;
  std::vector<double> opacity_logits;
  std::vector<Vec3> colors;
  std::vector<double> coeffs;      // [n_dynamic][basis_count] for `frame`
  std::vector<Vec6> trainable;     // one per trainable basis
  std::vector<Vec2> means2d;
  std::vector<std::uint8_t> visible;

  void resize(std::size_t n, std::size_t n_dynamic, std::size_t basis_count,
              std::size_t n_trainable);
};

[[nodiscard]] RenderTarget render(const PosedCloud& posed, const Camera& camera,
                                  const Vec3& background, const RenderOptions& opts = {});

/// Gaussian index and blending weight T_i * alpha_i of one composited splat.
struct PixelContribution {
  std::size_t index = 0;
  double weight = 0.0;
};

/// Contributors of pixel (x, y) in compositing order, as in the forward pass.
[[nodiscard]] std::vector<PixelContribution> pixel_contributions(const RenderTarget& target,
                                                                 int x, int y);

/// Backward pass for the forward call that produced `target`. `d_alpha` may be
/// empty. Throws ContractError when `target` carries no forward records or the
/// upstream gradients do not match its shape.
[[nodiscard]] PosedGradients render_backward(const RenderTarget& target, const Image& d_rgb,
                                             const Image& d_depth, const Image& d_alpha = {});

/// Chain rule from posed partials through mu_t = R mu0 + t, R_t = R R0 and
/// T = exp(sum_b c_b basis_b) into canonical, coefficient and basis partials.
[[nodiscard]] GradientBuffer backprop_motion(const PosedGradients& posed_grads,
                                             const GaussianCloud& cloud,
                                             const MotionModel& model, std::size_t frame);

/// render_backward followed by backprop_motion.
[[nodiscard]] GradientBuffer render_backward(const RenderTarget& target, const Image& d_rgb,
                                             const Image& d_depth, const Image& d_alpha,
                                             const GaussianCloud& cloud, const MotionModel& model);

/// Gradient of a function of a world point's projection, pulled back onto the point.
[[nodiscard]] Vec3 project_point_vjp(const Vec3& world, const Camera& camera, const Vec2& d_pixel);

}  // namespace msplat
