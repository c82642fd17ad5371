// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "msplat/rasterizer.hpp"

#include "msplat/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace msplat {

struct RenderAux {
  Camera camera;
  Vec3 background;
  RenderOptions opts;
  std::size_t frame = 0;
  std::size_t gaussian_count = 0;
  std::vector<Mat3> rotations;  // posed rotations
  std::vector<Vec3> log_scales;
  std::vector<Splat2D> splats;                  // depth-sorted
  std::vector<std::vector<std::uint32_t>> tiles;  // splat ids per tile, in depth order
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<std::uint32_t> last;  // per pixel: end of processed range in its tile list
  std::vector<double> final_t;      // per pixel transmittance after compositing
};

namespace {

template <class Fn>
void parallel_for(int count, int workers, Fn&& fn) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i, 0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < count; i += workers) fn(i, w);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

double splat_kernel(double m2, double cutoff_sigma) {
  const double r2 = cutoff_sigma * cutoff_sigma;
  if (!(m2 < r2)) return 0.0;
  const double floor = std::exp(-0.5 * r2);
  return (std::exp(-0.5 * m2) - floor) / (1.0 - floor);
}

double splat_kernel_d_m2(double m2, double cutoff_sigma) {
  const double r2 = cutoff_sigma * cutoff_sigma;
  if (!(m2 < r2)) return 0.0;
  const double floor = std::exp(-0.5 * r2);
  return -0.5 * std::exp(-0.5 * m2) / (1.0 - floor);
}

std::optional<Splat2D> project_gaussian(const Vec3& mean, const Mat3& rotation,
                                        const Vec3& log_scale, double opacity_logit,
                                        const Vec3& color, const Camera& camera,
                                        const RenderOptions& opts) {
  const auto& K = camera.intrinsics;
  const Mat3& W = camera.extrinsics.pose.rotation;
  const Vec3 pc = camera.extrinsics.pose.apply(mean);
  if (!(pc.z() > opts.near_plane)) {
    return std::nullopt;
  }
  Splat2D s;
  s.cam_mean = pc;
  s.depth = pc.z();
  const double iz = 1.0 / pc.z();
  s.mean = Vec2(K.fx * pc.x() * iz + K.cx, K.fy * pc.y() * iz + K.cy);

  const Vec3 scale = log_scale.array().exp();
  const Mat3 M = rotation * scale.asDiagonal();
  s.cov3d = M * M.transpose();

  s.jacobian << K.fx * iz, 0.0, -K.fx * pc.x() * iz * iz,  //
      0.0, K.fy * iz, -K.fy * pc.y() * iz * iz;
  const Eigen::Matrix<double, 2, 3> T = s.jacobian * W;
  s.cov = T * s.cov3d * T.transpose();
  s.cov(0, 1) = s.cov(1, 0) = 0.5 * (s.cov(0, 1) + s.cov(1, 0));
  s.cov += opts.cov_floor * Mat2::Identity();
  s.conic = s.cov.inverse();

  s.opacity = sigmoid(opacity_logit);
  s.color = color;

  const double rx = opts.cutoff_sigma * std::sqrt(s.cov(0, 0));
  const double ry = opts.cutoff_sigma * std::sqrt(s.cov(1, 1));
  s.x_min = std::max(0, static_cast<int>(std::ceil(s.mean.x() - rx)));
  s.x_max = std::min(K.width - 1, static_cast<int>(std::floor(s.mean.x() + rx)));
  s.y_min = std::max(0, static_cast<int>(std::ceil(s.mean.y() - ry)));
  s.y_max = std::min(K.height - 1, static_cast<int>(std::floor(s.mean.y() + ry)));
  return s;
}

Image RenderTarget::normalized_depth(double min_alpha) const {
  Image out(depth.width, depth.height, 1);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = alpha.data[i] > min_alpha ? depth.data[i] / alpha.data[i] : 0.0;
  }
  return out;
}

PosedGradients::PosedGradients(std::size_t n)
    : means(n, Vec3::Zero()),
      rotations(n, Mat3::Zero()),
      log_scales(n, Vec3::Zero()),
      opacity_logits(n, 0.0),
      colors(n, Vec3::Zero()),
      means2d(n, Vec2::Zero()),
      visible(n, 0) {}

void GradientBuffer::resize(std::size_t n, std::size_t n_dynamic, std::size_t basis_count,
                            std::size_t n_trainable) {
  means.assign(n, Vec3::Zero());
  rotations.assign(n, Quat4::Zero());
  log_scales.assign(n, Vec3::Zero());
  opacity_logits.assign(n, 0.0);
  colors.assign(n, Vec3::Zero());
  coeffs.assign(n_dynamic * basis_count, 0.0);
  trainable.assign(n_trainable, Vec6::Zero());
  means2d.assign(n, Vec2::Zero());
  visible.assign(n, 0);
}

RenderTarget render(const PosedCloud& posed, const Camera& camera, const Vec3& background,
                    const RenderOptions& opts) {
  const auto& K = camera.intrinsics;
  K.validate();
  if (opts.tile_size < 1) {
    throw InvalidArgument("render: tile_size must be >= 1");
  }
  auto aux = std::make_shared<RenderAux>();
  aux->camera = camera;
  aux->background = background;
  aux->opts = opts;
  aux->frame = posed.frame;
  aux->gaussian_count = posed.size();
  aux->rotations = posed.rotations;
  aux->log_scales = posed.log_scales;

  std::vector<Splat2D> projected;
  projected.reserve(posed.size());
  for (std::size_t i = 0; i < posed.size(); ++i) {
    auto s = project_gaussian(posed.means[i], posed.rotations[i], posed.log_scales[i],
                              posed.opacity_logits[i], posed.colors[i], camera, opts);
    if (!s || s->x_min > s->x_max || s->y_min > s->y_max) continue;
    s->source_index = i;
    projected.push_back(*s);
  }
  std::vector<std::size_t> order(projected.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return projected[a].depth < projected[b].depth;
  });
  aux->splats.reserve(order.size());
  for (auto k : order) aux->splats.push_back(projected[k]);

  const int ts = opts.tile_size;
  aux->tiles_x = (K.width + ts - 1) / ts;
  aux->tiles_y = (K.height + ts - 1) / ts;
  aux->tiles.assign(static_cast<std::size_t>(aux->tiles_x) * aux->tiles_y, {});
  for (std::uint32_t id = 0; id < aux->splats.size(); ++id) {
    const auto& s = aux->splats[id];
    for (int ty = s.y_min / ts; ty <= s.y_max / ts; ++ty) {
      for (int tx = s.x_min / ts; tx <= s.x_max / ts; ++tx) {
        aux->tiles[static_cast<std::size_t>(ty) * aux->tiles_x + tx].push_back(id);
      }
    }
  }

  RenderTarget out;
  out.rgb = Image(K.width, K.height, 3);
  out.depth = Image(K.width, K.height, 1);
  out.alpha = Image(K.width, K.height, 1);
  aux->last.assign(out.rgb.pixel_count(), 0);
  aux->final_t.assign(out.rgb.pixel_count(), 1.0);

  const int tile_count = aux->tiles_x * aux->tiles_y;
  RenderAux& a = *aux;
  parallel_for(tile_count, opts.workers, [&](int tile, int) {
    const int tx = tile % a.tiles_x;
    const int ty = tile / a.tiles_x;
    const auto& list = a.tiles[tile];
    const int x1 = std::min(K.width, (tx + 1) * ts);
    const int y1 = std::min(K.height, (ty + 1) * ts);
    for (int y = ty * ts; y < y1; ++y) {
      for (int x = tx * ts; x < x1; ++x) {
        double T = 1.0;
        Vec3 c = Vec3::Zero();
        double d = 0.0;
        std::uint32_t last = 0;
        for (std::uint32_t k = 0; k < list.size(); ++k) {
          const Splat2D& s = a.splats[list[k]];
          const double dx = x - s.mean.x();
          const double dy = y - s.mean.y();
          const double m2 = s.conic(0, 0) * dx * dx + 2.0 * s.conic(0, 1) * dx * dy +
                            s.conic(1, 1) * dy * dy;
          const double kern = splat_kernel(m2, opts.cutoff_sigma);
          if (kern <= 0.0) continue;
          const double alpha = std::min(opts.alpha_max, s.opacity * kern);
          const double w = T * alpha;
          c += w * s.color;
          d += w * s.depth;
          T *= 1.0 - alpha;
          last = k + 1;
          if (T < opts.min_transmittance) break;
        }
        const std::size_t p = static_cast<std::size_t>(y) * K.width + x;
        c += T * background;
        for (int ch = 0; ch < 3; ++ch) out.rgb.data[p * 3 + ch] = c[ch];
        out.depth.data[p] = d;
        out.alpha.data[p] = 1.0 - T;
        a.last[p] = last;
        a.final_t[p] = T;
      }
    }
  });
  out.aux = std::move(aux);
  return out;
}

std::vector<PixelContribution> pixel_contributions(const RenderTarget& target, int x, int y) {
  if (!target.aux) throw InvalidArgument("pixel_contributions: render target has no pass data");
  const RenderAux& a = *target.aux;
  const auto& K = a.camera.intrinsics;
  if (x < 0 || y < 0 || x >= K.width || y >= K.height) {
    throw InvalidArgument("pixel_contributions: pixel outside the image");
  }
  const int ts = a.opts.tile_size;
  const auto& list = a.tiles[static_cast<std::size_t>(y / ts) * a.tiles_x + x / ts];
  std::vector<PixelContribution> out;
  double T = 1.0;
  for (const std::uint32_t id : list) {
    const Splat2D& s = a.splats[id];
    const double dx = x - s.mean.x();
    const double dy = y - s.mean.y();
    const double m2 =
        s.conic(0, 0) * dx * dx + 2.0 * s.conic(0, 1) * dx * dy + s.conic(1, 1) * dy * dy;
    const double kern = splat_kernel(m2, a.opts.cutoff_sigma);
    if (kern <= 0.0) continue;
    const double alpha = std::min(a.opts.alpha_max, s.opacity * kern);
    out.push_back({s.source_index, T * alpha});
    T *= 1.0 - alpha;
    if (T < a.opts.min_transmittance) break;
  }
  return out;
}

namespace {

struct SplatGrad {
  Vec2 mean = Vec2::Zero();
  Mat2 conic = Mat2::Zero();
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
  double depth = 0.0;
  bool touched = false;
};

}  // namespace

PosedGradients render_backward(const RenderTarget& target, const Image& d_rgb,
                               const Image& d_depth, const Image& d_alpha) {
  if (!target.aux) {
    throw ContractError("render_backward: render target carries no forward records");
  }
  const RenderAux& a = *target.aux;
  const auto& K = a.camera.intrinsics;
  if (d_rgb.width != K.width || d_rgb.height != K.height || d_rgb.channels != 3) {
    throw ContractError("render_backward: d_rgb shape does not match the forward pass");
  }
  if (d_depth.width != K.width || d_depth.height != K.height || d_depth.channels != 1) {
    throw ContractError("render_backward: d_depth shape does not match the forward pass");
  }
  const bool has_alpha = !d_alpha.data.empty();
  if (has_alpha && (d_alpha.width != K.width || d_alpha.height != K.height || d_alpha.channels != 1)) {
    throw ContractError("render_backward: d_alpha shape does not match the forward pass");
  }

  const RenderOptions& opts = a.opts;
  const int ts = opts.tile_size;
  const int tile_count = a.tiles_x * a.tiles_y;
  const int workers = std::max(1, std::min(opts.workers, tile_count));
  std::vector<std::vector<SplatGrad>> partial(workers, std::vector<SplatGrad>(a.splats.size()));

  parallel_for(tile_count, workers, [&](int tile, int worker) {
    auto& grads = partial[worker];
    const int tx = tile % a.tiles_x;
    const int ty = tile / a.tiles_x;
    const auto& list = a.tiles[tile];
    const int x1 = std::min(K.width, (tx + 1) * ts);
    const int y1 = std::min(K.height, (ty + 1) * ts);
    for (int y = ty * ts; y < y1; ++y) {
      for (int x = tx * ts; x < x1; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * K.width + x;
        const Vec3 gc(d_rgb.data[p * 3], d_rgb.data[p * 3 + 1], d_rgb.data[p * 3 + 2]);
        const double gd = d_depth.data[p];
        const double ga = has_alpha ? d_alpha.data[p] : 0.0;
        if (gc.isZero(0.0) && gd == 0.0 && ga == 0.0) continue;

        const double t_final = a.final_t[p];
        double T = t_final;
        Vec3 behind_c = t_final * a.background;  // sum_{j>i} T_j a_j c_j + T_final * bg
        double behind_d = 0.0;
        for (std::uint32_t k = a.last[p]; k-- > 0;) {
          const std::uint32_t id = list[k];
          const Splat2D& s = a.splats[id];
          const double dx = x - s.mean.x();
          const double dy = y - s.mean.y();
          const double m2 = s.conic(0, 0) * dx * dx + 2.0 * s.conic(0, 1) * dx * dy +
                            s.conic(1, 1) * dy * dy;
          const double kern = splat_kernel(m2, opts.cutoff_sigma);
          if (kern <= 0.0) continue;
          const double raw = s.opacity * kern;
          const double alpha = std::min(opts.alpha_max, raw);
          const double one_minus = 1.0 - alpha;
          T /= one_minus;
          const double w = T * alpha;

          SplatGrad& g = grads[id];
          g.touched = true;
          g.color += w * gc;
          g.depth += w * gd;

          const double d_alpha_i = gc.dot(T * s.color - behind_c / one_minus) +
                                   gd * (T * s.depth - behind_d / one_minus) +
                                   ga * (t_final / one_minus);
          behind_c += w * s.color;
          behind_d += w * s.depth;

          if (raw >= opts.alpha_max) continue;  // clamped: no gradient to o or the kernel
          g.opacity += d_alpha_i * kern;
          const double d_m2 = d_alpha_i * s.opacity * splat_kernel_d_m2(m2, opts.cutoff_sigma);
          const Vec2 dvec(dx, dy);
          g.conic += d_m2 * dvec * dvec.transpose();
          g.mean += -2.0 * d_m2 * (s.conic * dvec);
        }
      }
    }
  });

  // Reduce per-worker partials in worker order.
  std::vector<SplatGrad> total = std::move(partial[0]);
  for (int w = 1; w < workers; ++w) {
    for (std::size_t i = 0; i < total.size(); ++i) {
      const auto& g = partial[w][i];
      if (!g.touched) continue;
      auto& t = total[i];
      t.touched = true;
      t.mean += g.mean;
      t.conic += g.conic;
      t.opacity += g.opacity;
      t.color += g.color;
      t.depth += g.depth;
    }
  }

  PosedGradients out(a.gaussian_count);
  const Mat3& W = a.camera.extrinsics.pose.rotation;
  for (std::size_t id = 0; id < a.splats.size(); ++id) {
    const SplatGrad& g = total[id];
    if (!g.touched) continue;
    const Splat2D& s = a.splats[id];
    const std::size_t i = s.source_index;
    out.visible[i] = 1;
    out.colors[i] += g.color;
    out.opacity_logits[i] += g.opacity * s.opacity * (1.0 - s.opacity);
    out.means2d[i] += g.mean;

    // conic = cov^-1  =>  dL/dcov = -conic * dL/dconic * conic
    const Mat2 g_cov = -(s.conic * g.conic * s.conic);
    const Eigen::Matrix<double, 2, 3> T = s.jacobian * W;
    const Mat3 g_cov3d = T.transpose() * g_cov * T;
    const Eigen::Matrix<double, 2, 3> g_T = 2.0 * g_cov * T * s.cov3d;
    const Eigen::Matrix<double, 2, 3> g_J = g_T * W.transpose();

    const double X = s.cam_mean.x(), Y = s.cam_mean.y(), Z = s.cam_mean.z();
    const double iz = 1.0 / Z, iz2 = iz * iz, iz3 = iz2 * iz;
    const double fx = a.camera.intrinsics.fx, fy = a.camera.intrinsics.fy;
    Vec3 g_pc = Vec3::Zero();
    // Mean projection and depth.
    g_pc.x() += g.mean.x() * fx * iz;
    g_pc.y() += g.mean.y() * fy * iz;
    g_pc.z() += -g.mean.x() * fx * X * iz2 - g.mean.y() * fy * Y * iz2 + g.depth;
    // EWA Jacobian entries.
    g_pc.x() += g_J(0, 2) * (-fx * iz2);
    g_pc.y() += g_J(1, 2) * (-fy * iz2);
    g_pc.z() += g_J(0, 0) * (-fx * iz2) + g_J(0, 2) * (2.0 * fx * X * iz3) +
                g_J(1, 1) * (-fy * iz2) + g_J(1, 2) * (2.0 * fy * Y * iz3);
    out.means[i] += W.transpose() * g_pc;

    // cov3d = M M^T with M = R diag(s)
    const Mat3& R = a.rotations[i];
    const Vec3 scale = a.log_scales[i].array().exp();
    const Mat3 M = R * scale.asDiagonal();
    const Mat3 g_sym = 0.5 * (g_cov3d + g_cov3d.transpose());
    const Mat3 g_M = 2.0 * g_sym * M;
    out.rotations[i] += g_M * scale.asDiagonal();
    for (int k = 0; k < 3; ++k) {
      out.log_scales[i][k] += g_M.col(k).dot(R.col(k)) * scale[k];
    }
  }
  return out;
}

GradientBuffer backprop_motion(const PosedGradients& pg, const GaussianCloud& cloud,
                               const MotionModel& model, std::size_t frame) {
  if (pg.size() != cloud.size()) {
    throw ContractError("backprop_motion: gradient count does not match the cloud");
  }
  if (frame >= model.frames()) {
    throw InvalidArgument("backprop_motion: frame out of range");
  }
  const std::size_t B = model.basis_count();
  GradientBuffer out;
  out.frame = frame;
  out.resize(cloud.size(), model.dynamic_count(), B, model.trainable_count());
  out.means2d = pg.means2d;
  out.visible = pg.visible;
  out.colors = pg.colors;
  out.opacity_logits = pg.opacity_logits;
  out.log_scales = pg.log_scales;

  const auto rows = cloud.motion_rows();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Gaussian& g = cloud.gaussians[i];
    const Mat3 R0 = g.rotation_matrix();
    const Vec3& g_mu = pg.means[i];
    const Mat3& g_Rt = pg.rotations[i];
    if (rows[i] < 0) {
      out.means[i] = g_mu;
      out.rotations[i] = quat_matrix_vjp(g.rotation, g_Rt);
      continue;
    }
    const auto row = model.row(static_cast<std::size_t>(rows[i]), frame);
    const Twist xi = motion_twist(row, model);
    const RigidTransform T = se3_exp(xi);
    out.means[i] = T.rotation.transpose() * g_mu;
    out.rotations[i] = quat_matrix_vjp(g.rotation, T.rotation.transpose() * g_Rt);
    if (g_mu.isZero(0.0) && g_Rt.isZero(0.0)) continue;

    const Mat3 g_R = g_Rt * R0.transpose() + g_mu * g.mean.transpose();
    const Vec6 g_xi = se3_exp_vjp(xi, T, g_R, g_mu);
    double* g_row = out.coeffs.data() + static_cast<std::size_t>(rows[i]) * B;
    for (std::size_t b = 0; b < B; ++b) {
      g_row[b] += model.basis(b).vector().dot(g_xi);
      if (b >= MotionModel::kFixedCount) {
        out.trainable[b - MotionModel::kFixedCount] += row[b] * g_xi;
      }
    }
  }
  return out;
}

GradientBuffer render_backward(const RenderTarget& target, const Image& d_rgb,
                               const Image& d_depth, const Image& d_alpha,
                               const GaussianCloud& cloud, const MotionModel& model) {
  const PosedGradients pg = render_backward(target, d_rgb, d_depth, d_alpha);
  return backprop_motion(pg, cloud, model, target.aux->frame);
}

Vec3 project_point_vjp(const Vec3& world, const Camera& camera, const Vec2& d_pixel) {
  const auto& K = camera.intrinsics;
  const Mat3& W = camera.extrinsics.pose.rotation;
  const Vec3 pc = camera.extrinsics.pose.apply(world);
  const double iz = 1.0 / pc.z();
  const Vec3 g_pc(d_pixel.x() * K.fx * iz, d_pixel.y() * K.fy * iz,
                  -(d_pixel.x() * K.fx * pc.x() + d_pixel.y() * K.fy * pc.y()) * iz * iz);
  return W.transpose() * g_pc;
}

}  // namespace msplat
