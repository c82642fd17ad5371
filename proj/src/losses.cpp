// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "msplat/losses.hpp"

#include "msplat/errors.hpp"
#include "msplat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace msplat {

namespace {

// Smooths the Euclidean norm at zero so the track term stays differentiable.
constexpr double kTrackEps2 = 1e-12;

void check_weight(double w, const char* name) {
  if (!std::isfinite(w) || w < 0.0) {
    throw InvalidArgument(std::string("loss config: ") + name + " must be finite and >= 0");
  }
}

}  // namespace

void LossConfig::validate() const {
  check_weight(w_rgb, "w_rgb");
  check_weight(w_ssim, "w_ssim");
  check_weight(w_depth, "w_depth");
  check_weight(w_track, "w_track");
  check_weight(w_coeff, "w_coeff");
  check_weight(w_smooth, "w_smooth");
  if (!(lambda_fixed >= 0.0 && lambda_fixed <= 1.0)) {
    throw InvalidArgument("loss config: lambda_fixed must lie in [0, 1]");
  }
}

LossTerms& LossTerms::operator+=(const LossTerms& o) {
  rgb += o.rgb;
  ssim += o.ssim;
  depth += o.depth;
  track += o.track;
  coeff += o.coeff;
  smooth += o.smooth;
  total += o.total;
  return *this;
}

LossTerms& LossTerms::operator/=(double d) {
  rgb /= d;
  ssim /= d;
  depth /= d;
  track /= d;
  coeff /= d;
  smooth /= d;
  total /= d;
  return *this;
}

double motion_coeff_penalty(std::span<const double> row, double lambda_fixed) {
  double fixed = 0.0, trainable = 0.0;
  for (std::size_t b = 0; b < row.size(); ++b) {
    const double c2 = row[b] * row[b];
    if (b < MotionModel::kFixedCount) {
      fixed += c2;
    } else {
      trainable += c2;
    }
  }
  return lambda_fixed * fixed + (1.0 - lambda_fixed) * trainable;
}

double coeff_regularizer(const MotionModel& model, double lambda_fixed, double weight,
                         std::vector<double>* grad) {
  const std::size_t N = model.dynamic_count(), F = model.frames(), B = model.basis_count();
  if (N == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(N * F);
  const auto& c = model.coeffs();
  double sum = 0.0;
  for (std::size_t r = 0; r < N * F; ++r) {
    sum += motion_coeff_penalty(std::span<const double>(c.data() + r * B, B), lambda_fixed);
  }
  if (grad != nullptr && weight != 0.0) {
    for (std::size_t k = 0; k < c.size(); ++k) {
      const double lam = (k % B) < MotionModel::kFixedCount ? lambda_fixed : 1.0 - lambda_fixed;
      (*grad)[k] += weight * 2.0 * lam * c[k] * inv;
    }
  }
  return weight * sum * inv;
}

double smoothness_regularizer(const MotionModel& model, double weight, std::vector<double>* grad) {
  const std::size_t N = model.dynamic_count(), F = model.frames(), B = model.basis_count();
  if (N == 0 || F < 2) return 0.0;
  const double inv = 1.0 / static_cast<double>(N * (F - 1));
  const auto& c = model.coeffs();
  double sum = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t t = 0; t + 1 < F; ++t) {
      const std::size_t a = (i * F + t) * B;
      const std::size_t b = a + B;
      for (std::size_t k = 0; k < B; ++k) {
        const double d = c[b + k] - c[a + k];
        sum += d * d;
        if (grad != nullptr && weight != 0.0) {
          const double g = weight * 2.0 * d * inv;
          (*grad)[b + k] += g;
          (*grad)[a + k] -= g;
        }
      }
    }
  }
  return weight * sum * inv;
}

std::vector<TrackBinding> bind_tracks(const TrackSet& tracks, const std::vector<Image>& depths,
                                      const CameraTrajectory& traj, const GaussianCloud& cloud,
                                      const MotionModel& model, std::size_t canonical_frame,
                                      std::size_t k) {
  std::vector<TrackBinding> out;
  if (tracks.queries == 0 || canonical_frame >= depths.size() || k == 0) return out;
  const Camera cam = traj.camera(canonical_frame);
  const PosedCloud posed = pose_at_time(cloud, model, canonical_frame);
  const RenderTarget rt = render(posed, cam, Vec3::Zero());
  const Image& depth = depths[canonical_frame];
  const auto motion_rows = cloud.motion_rows();
  auto row_of = [&](std::size_t g) {
    return motion_rows[g] < 0 ? TrackBinding::kStatic : static_cast<std::size_t>(motion_rows[g]);
  };

  std::vector<double> dist(cloud.size());
  std::vector<std::size_t> order(cloud.size());
  for (std::size_t q = 0; q < tracks.queries; ++q) {
    if (!tracks.is_visible(q, canonical_frame)) continue;
    const Vec2 uv = tracks.position(q, canonical_frame);
    const int px = std::clamp(static_cast<int>(std::lround(uv.x())), 0, depth.width - 1);
    const int py = std::clamp(static_cast<int>(std::lround(uv.y())), 0, depth.height - 1);
    const double z = depth.at(px, py);
    if (!(z > 0.0) || !std::isfinite(z)) continue;
    const Ray ray = pixel_ray(uv.x(), uv.y(), cam.intrinsics, cam.extrinsics);
    // Depth is camera-frame z, the ray is unit length.
    const Vec3 cam_dir = cam.extrinsics.pose.rotation * ray.direction;
    const Vec3 lifted = ray.origin + ray.direction * (z / cam_dir.z());

    TrackBinding bind;
    bind.query = q;
    bind.anchor = lifted;
    // Splats compositing into the query pixel, strongest first.
    auto contrib = pixel_contributions(rt, px, py);
    const auto top = std::min(k, contrib.size());
    std::partial_sort(contrib.begin(), contrib.begin() + static_cast<std::ptrdiff_t>(top),
                      contrib.end(), [](const PixelContribution& a, const PixelContribution& b) {
                        return a.weight > b.weight || (a.weight == b.weight && a.index < b.index);
                      });
    for (std::size_t j = 0; j < top; ++j) {
      bind.gaussians.push_back(contrib[j].index);
      bind.rows.push_back(row_of(contrib[j].index));
      bind.weights.push_back(contrib[j].weight);
    }
    if (bind.gaussians.empty()) {
      // Nothing rendered there yet: inverse-distance weights of the nearest means.
      const std::size_t kk = std::min(k, cloud.size());
      for (std::size_t g = 0; g < cloud.size(); ++g) dist[g] = (posed.means[g] - lifted).norm();
      std::iota(order.begin(), order.end(), 0);
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), order.end(),
                        [&](std::size_t a, std::size_t b) {
                          return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
                        });
      for (std::size_t j = 0; j < kk; ++j) {
        bind.gaussians.push_back(order[j]);
        bind.rows.push_back(row_of(order[j]));
        bind.weights.push_back(1.0 / (dist[order[j]] + 1e-6));
      }
    }
    double wsum = 0.0;
    for (double w : bind.weights) wsum += w;
    if (!(wsum > 0.0)) continue;
    for (auto& w : bind.weights) w /= wsum;
    out.push_back(std::move(bind));
  }
  return out;
}

double track_loss(const MotionModel& model, const Camera& camera, const TrackSet& tracks,
                  const std::vector<TrackBinding>& bindings, std::size_t frame, double weight,
                  std::vector<double>* grad_coeffs, std::vector<Vec6>* grad_bases) {
  const double norm = 1.0 / std::max(camera.intrinsics.width, camera.intrinsics.height);
  std::size_t count = 0;
  for (const auto& b : bindings) {
    if (tracks.is_visible(b.query, frame)) ++count;
  }
  if (count == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  const std::size_t B = model.basis_count();
  const std::size_t F = model.frames();
  const bool want_grad = weight != 0.0 && (grad_coeffs != nullptr || grad_bases != nullptr);
  double sum = 0.0;
  std::vector<Twist> xis;
  std::vector<RigidTransform> Ts;
  for (const auto& b : bindings) {
    if (!tracks.is_visible(b.query, frame)) continue;
    const std::size_t K = b.rows.size();
    xis.resize(K);
    Ts.resize(K);
    Vec3 x = Vec3::Zero();
    for (std::size_t j = 0; j < K; ++j) {
      if (b.rows[j] == TrackBinding::kStatic) {
        xis[j] = Twist{};
        Ts[j] = RigidTransform::identity();
      } else {
        xis[j] = motion_twist(model.row(b.rows[j], frame), model);
        Ts[j] = se3_exp(xis[j]);
      }
      x += b.weights[j] * Ts[j].apply(b.anchor);
    }
    const Vec3 pc = camera.extrinsics.pose.apply(x);
    if (pc.z() <= kMinProjectionDepth) continue;
    const Vec2 pred = project_point(x, camera.intrinsics, camera.extrinsics).pixel;
    const Vec2 r = (pred - tracks.position(b.query, frame)) * norm;
    const double e = std::sqrt(r.squaredNorm() + kTrackEps2);
    sum += e;
    if (!want_grad) continue;
    const Vec3 g_x = project_point_vjp(x, camera, (weight * inv * norm / e) * r);
    for (std::size_t j = 0; j < K; ++j) {
      if (b.rows[j] == TrackBinding::kStatic) continue;
      const Vec3 g_t = b.weights[j] * g_x;
      const Mat3 g_R = g_t * b.anchor.transpose();
      const Vec6 g_xi = se3_exp_vjp(xis[j], Ts[j], g_R, g_t);
      const auto row = model.row(b.rows[j], frame);
      for (std::size_t k = 0; k < B; ++k) {
        if (grad_coeffs != nullptr) {
          (*grad_coeffs)[(b.rows[j] * F + frame) * B + k] += model.basis(k).vector().dot(g_xi);
        }
        if (grad_bases != nullptr && k >= MotionModel::kFixedCount) {
          (*grad_bases)[k - MotionModel::kFixedCount] += row[k] * g_xi;
        }
      }
    }
  }
  return weight * sum * inv;
}

ImageLoss image_loss(const RenderTarget& rendered, const Image* target_rgb,
                     const Image* target_depth, const LossConfig& cfg, bool rgb_terms) {
  ImageLoss out;
  const int W = rendered.rgb.width, H = rendered.rgb.height;
  out.d_rgb = Image(W, H, 3);
  out.d_depth = Image(W, H, 1);
  out.d_alpha = Image(W, H, 1);

  if (rgb_terms && target_rgb != nullptr) {
    if (!target_rgb->same_shape(rendered.rgb)) {
      throw InvalidArgument("loss: target image shape differs from the render");
    }
    const double inv = 1.0 / static_cast<double>(rendered.rgb.data.size());
    double l1 = 0.0;
    for (std::size_t k = 0; k < rendered.rgb.data.size(); ++k) {
      const double d = rendered.rgb.data[k] - target_rgb->data[k];
      l1 += std::abs(d);
      out.d_rgb.data[k] = cfg.w_rgb * inv * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
    }
    out.terms.rgb = cfg.w_rgb * l1 * inv;
    if (cfg.w_ssim != 0.0) {
      const SsimResult s = ssim_with_gradient(rendered.rgb, *target_rgb);
      out.terms.ssim = cfg.w_ssim * (1.0 - s.value);
      for (std::size_t k = 0; k < out.d_rgb.data.size(); ++k) {
        out.d_rgb.data[k] -= cfg.w_ssim * s.gradient.data[k];
      }
    }
  }

  if (target_depth != nullptr && cfg.w_depth != 0.0) {
    if (target_depth->width != W || target_depth->height != H) {
      throw InvalidArgument("loss: target depth shape differs from the render");
    }
    std::size_t valid = 0;
    for (std::size_t p = 0; p < rendered.alpha.data.size(); ++p) {
      if (rendered.alpha.data[p] > 0.5 && target_depth->data[p] > 0.0) ++valid;
    }
    if (valid > 0) {
      const double inv = 1.0 / static_cast<double>(valid);
      double l1 = 0.0;
      for (std::size_t p = 0; p < rendered.alpha.data.size(); ++p) {
        const double A = rendered.alpha.data[p];
        if (!(A > 0.5 && target_depth->data[p] > 0.0)) continue;
        const double D = rendered.depth.data[p];
        const double r = D / A - target_depth->data[p];
        l1 += std::abs(r);
        const double g = cfg.w_depth * inv * (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0));
        out.d_depth.data[p] = g / A;
        out.d_alpha.data[p] = -g * D / (A * A);
      }
      out.terms.depth = cfg.w_depth * l1 * inv;
    }
  }
  return out;
}

LossResult loss(const RenderTarget& rendered, const PosedCloud& posed, const Camera& camera,
                const FrameInputs& frame, const MotionModel& model, const LossConfig& cfg) {
  LossResult out;
  ImageLoss img = image_loss(rendered, frame.rgb, frame.depth, cfg, frame.rgb_terms);
  out.terms = img.terms;
  out.d_rgb = std::move(img.d_rgb);
  out.d_depth = std::move(img.d_depth);
  out.d_alpha = std::move(img.d_alpha);

  out.d_coeffs.assign(model.coeffs().size(), 0.0);
  out.d_bases.assign(model.trainable().size(), Vec6::Zero());
  if (frame.tracks != nullptr && frame.bindings != nullptr && cfg.w_track != 0.0) {
    out.terms.track = track_loss(model, camera, *frame.tracks, *frame.bindings, posed.frame,
                                 cfg.w_track, &out.d_coeffs, &out.d_bases);
  }
  out.terms.coeff = coeff_regularizer(model, cfg.lambda_fixed, cfg.w_coeff, &out.d_coeffs);
  out.terms.smooth = smoothness_regularizer(model, cfg.w_smooth, &out.d_coeffs);

  const std::pair<const char*, double> named[] = {
      {"rgb", out.terms.rgb},     {"ssim", out.terms.ssim},   {"depth", out.terms.depth},
      {"track", out.terms.track}, {"coeff", out.terms.coeff}, {"smooth", out.terms.smooth}};
  for (const auto& [name, value] : named) {
    if (!std::isfinite(value)) {
      throw DivergenceError(std::string("loss term '") + name + "' is not finite at frame " +
                            std::to_string(posed.frame));
    }
    out.terms.total += value;
  }
  return out;
}

}  // namespace msplat
