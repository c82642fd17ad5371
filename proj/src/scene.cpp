// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "msplat/scene.hpp"

#include "msplat/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace msplat {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) { return std::log(p / (1.0 - p)); }

double Gaussian::opacity() const { return sigmoid(opacity_logit); }

std::size_t GaussianCloud::dynamic_count() const {
  return static_cast<std::size_t>(std::count_if(dynamic_mask.begin(), dynamic_mask.end(),
                                                [](std::uint8_t d) { return d != 0; }));
}

std::vector<std::ptrdiff_t> GaussianCloud::motion_rows() const {
  std::vector<std::ptrdiff_t> rows(size(), -1);
  std::ptrdiff_t next = 0;
  for (std::size_t i = 0; i < size(); ++i) {
    if (is_dynamic(i)) rows[i] = next++;
  }
  return rows;
}

void GaussianCloud::push_back(const Gaussian& g, bool dynamic) {
  gaussians.push_back(g);
  dynamic_mask.push_back(dynamic ? 1 : 0);
}

void GaussianCloud::validate() const {
  if (gaussians.empty()) {
    throw ValidationError("cloud: no Gaussians");
  }
  if (dynamic_mask.size() != gaussians.size()) {
    throw ValidationError("cloud: dynamic_mask length differs from Gaussian count");
  }
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    const auto& g = gaussians[i];
    const std::string id = "cloud: Gaussian " + std::to_string(i);
    if (!g.mean.allFinite() || !g.rotation.allFinite() || !g.log_scale.allFinite() ||
        !std::isfinite(g.opacity_logit) || !g.color.allFinite()) {
      throw ValidationError(id + " has non-finite parameters");
    }
    if (std::abs(g.rotation.norm() - 1.0) > 1e-6) {
      throw ValidationError(id + " quaternion is not unit length");
    }
    const Vec3 s = g.scale();
    if ((s.array() <= 1e-6).any() || (s.array() >= 1e3).any()) {
      throw ValidationError(id + " scale outside (1e-6, 1e3)");
    }
  }
}

MotionModel::MotionModel(std::size_t n_dynamic, std::size_t frames, std::size_t basis_count)
    : n_dynamic_(n_dynamic), frames_(frames), basis_count_(basis_count) {
  if (basis_count < kFixedCount) {
    throw InvalidArgument("motion model: basis count must be >= 6");
  }
  if (frames == 0) {
    throw InvalidArgument("motion model: frame count must be >= 1");
  }
  trainable_.resize(basis_count - kFixedCount);
  coeffs_.assign(n_dynamic * frames * basis_count, 0.0);
}

const Twist& MotionModel::basis(std::size_t b) const {
  return b < kFixedCount ? fixed_[b] : trainable_[b - kFixedCount];
}

std::span<const double> MotionModel::row(std::size_t i, std::size_t t) const {
  return {coeffs_.data() + (i * frames_ + t) * basis_count_, basis_count_};
}

std::span<double> MotionModel::row(std::size_t i, std::size_t t) {
  return {coeffs_.data() + (i * frames_ + t) * basis_count_, basis_count_};
}

double MotionModel::coeff(std::size_t i, std::size_t t, std::size_t b) const {
  return coeffs_[(i * frames_ + t) * basis_count_ + b];
}

double& MotionModel::coeff(std::size_t i, std::size_t t, std::size_t b) {
  return coeffs_[(i * frames_ + t) * basis_count_ + b];
}

MotionModel MotionModel::gather_rows(std::span<const std::size_t> rows) const {
  MotionModel out(rows.size(), frames_, basis_count_);
  out.trainable_ = trainable_;
  const std::size_t stride = frames_ * basis_count_;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    std::copy_n(coeffs_.begin() + static_cast<std::ptrdiff_t>(rows[k] * stride), stride,
                out.coeffs_.begin() + static_cast<std::ptrdiff_t>(k * stride));
  }
  return out;
}

Twist motion_twist(std::span<const double> coeff_row, const MotionModel& model) {
  if (coeff_row.size() != model.basis_count()) {
    throw InvalidArgument("compose_motion: coefficient row has wrong length");
  }
  Vec6 xi = Vec6::Zero();
  for (std::size_t b = 0; b < coeff_row.size(); ++b) {
    if (!std::isfinite(coeff_row[b])) {
      throw InvalidArgument("compose_motion: non-finite coefficient at basis " +
                            std::to_string(b));
    }
    xi += coeff_row[b] * model.basis(b).vector();
  }
  return Twist::from_vector(xi);
}

RigidTransform compose_motion(std::span<const double> coeff_row, const MotionModel& model) {
  return se3_exp(motion_twist(coeff_row, model));
}

PosedCloud pose_at_time(const GaussianCloud& cloud, const MotionModel& model, std::size_t t) {
  if (t >= model.frames()) {
    throw InvalidArgument("pose_at_time: frame " + std::to_string(t) + " out of range (" +
                          std::to_string(model.frames()) + " frames)");
  }
  const auto rows = cloud.motion_rows();
  if (cloud.dynamic_count() != model.dynamic_count()) {
    throw InvalidArgument("pose_at_time: motion model rows do not match dynamic Gaussians");
  }
  const std::size_t n = cloud.size();
  PosedCloud posed;
  posed.frame = t;
  posed.means.resize(n);
  posed.rotations.resize(n);
  posed.log_scales.resize(n);
  posed.opacity_logits.resize(n);
  posed.colors.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Gaussian& g = cloud.gaussians[i];
    const Mat3 r0 = g.rotation_matrix();
    if (rows[i] >= 0) {
      const RigidTransform T = compose_motion(model.row(rows[i], t), model);
      posed.means[i] = T.rotation * g.mean + T.translation;
      posed.rotations[i] = T.rotation * r0;
    } else {
      posed.means[i] = g.mean;
      posed.rotations[i] = r0;
    }
    posed.log_scales[i] = g.log_scale;
    posed.opacity_logits[i] = g.opacity_logit;
    posed.colors[i] = g.color;
  }
  return posed;
}

namespace {

ResampledScene assemble(const GaussianCloud& cloud, const MotionModel& model,
                        std::vector<Gaussian> gaussians, std::vector<std::size_t> origin) {
  const auto rows = cloud.motion_rows();
  ResampledScene out;
  std::vector<std::size_t> motion_source;
  for (std::size_t k = 0; k < gaussians.size(); ++k) {
    const bool dyn = cloud.is_dynamic(origin[k]);
    out.cloud.push_back(gaussians[k], dyn);
    if (dyn) motion_source.push_back(static_cast<std::size_t>(rows[origin[k]]));
  }
  out.model = model.gather_rows(motion_source);
  out.origin = std::move(origin);
  return out;
}

}  // namespace

ResampledScene downsample(const GaussianCloud& cloud, const MotionModel& model, double factor,
                          std::uint64_t seed) {
  if (!(factor > 0.0 && factor <= 1.0)) {
    throw InvalidArgument("downsample: factor must lie in (0, 1]");
  }
  std::vector<std::size_t> dyn;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.is_dynamic(i)) dyn.push_back(i);
  }
  const auto keep_count = static_cast<std::size_t>(
      std::ceil(static_cast<double>(dyn.size()) * factor - 1e-9));

  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first keep_count entries are a uniform sample.
  for (std::size_t k = 0; k < keep_count && k + 1 < dyn.size(); ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, dyn.size() - 1);
    std::swap(dyn[k], dyn[pick(rng)]);
  }
  std::vector<std::uint8_t> keep(cloud.size(), 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!cloud.is_dynamic(i)) keep[i] = 1;
  }
  for (std::size_t k = 0; k < keep_count; ++k) keep[dyn[k]] = 1;

  std::vector<Gaussian> gaussians;
  std::vector<std::size_t> origin;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (keep[i]) {
      gaussians.push_back(cloud.gaussians[i]);
      origin.push_back(i);
    }
  }
  return assemble(cloud, model, std::move(gaussians), std::move(origin));
}

ResampledScene densify_and_prune(const GaussianCloud& cloud, const MotionModel& model,
                                 const DensifyStats& stats, const DensifyOptions& opts) {
  if (stats.grad_norm.size() != cloud.size() || stats.mean_grad.size() != cloud.size()) {
    throw InvalidArgument("densify_and_prune: gradient statistics not aligned with cloud");
  }
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double shrink = std::log(1.6);

  std::vector<Gaussian> gaussians;
  std::vector<std::size_t> origin;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Gaussian& g = cloud.gaussians[i];
    if (g.opacity() < opts.prune_opacity) {
      continue;
    }
    if (!(stats.grad_norm[i] >= opts.grad_threshold)) {
      gaussians.push_back(g);
      origin.push_back(i);
      continue;
    }
    const Vec3 s = g.scale();
    if (s.maxCoeff() > opts.size_threshold) {
      const Mat3 R = g.rotation_matrix();
      for (int c = 0; c < 2; ++c) {
        Gaussian child = g;
        const Vec3 z(normal(rng), normal(rng), normal(rng));
        child.mean = g.mean + R * s.cwiseProduct(z);
        child.log_scale = g.log_scale.array() - shrink;
        gaussians.push_back(child);
        origin.push_back(i);
      }
    } else {
      gaussians.push_back(g);
      origin.push_back(i);
      Gaussian copy = g;
      const double gn = stats.mean_grad[i].norm();
      if (gn > 0.0) {
        copy.mean -= 0.01 * s.maxCoeff() * stats.mean_grad[i] / gn;
      }
      gaussians.push_back(copy);
      origin.push_back(i);
    }
  }
  return assemble(cloud, model, std::move(gaussians), std::move(origin));
}

std::vector<Vec3> track_gaussian(std::size_t index, const MotionModel& model,
                                 const GaussianCloud& cloud) {
  if (index >= cloud.size()) {
    throw InvalidArgument("track_gaussian: index out of range");
  }
  if (!cloud.is_dynamic(index)) {
    throw InvalidArgument("track_gaussian: Gaussian " + std::to_string(index) +
                          " is static; its trajectory is constant");
  }
  const auto row = static_cast<std::size_t>(cloud.motion_rows()[index]);
  const Vec3& mu0 = cloud.gaussians[index].mean;
  std::vector<Vec3> out;
  out.reserve(model.frames());
  for (std::size_t t = 0; t < model.frames(); ++t) {
    out.push_back(compose_motion(model.row(row, t), model).apply(mu0));
  }
  return out;
}

double scene_extent(const GaussianCloud& cloud) {
  if (cloud.gaussians.empty()) return 0.0;
  Vec3 lo = cloud.gaussians.front().mean;
  Vec3 hi = lo;
  for (const auto& g : cloud.gaussians) {
    lo = lo.cwiseMin(g.mean);
    hi = hi.cwiseMax(g.mean);
  }
  return (hi - lo).norm();
}

}  // namespace msplat
