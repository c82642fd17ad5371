// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "msplat/errors.hpp"
#include "msplat/exports.hpp"
#include "msplat/metrics.hpp"
#include "msplat/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

namespace msplat {

namespace {

constexpr double kMinLogScale = -13.8;  // ~1e-6
constexpr double kMaxLogScale = 6.9;    // ~1e3

struct Groups {
  std::vector<double> means, rotations, scales, opacities, colors, bases;
};

Groups pack(const GaussianCloud& cloud, const MotionModel& model) {
  Groups g;
  const std::size_t n = cloud.size();
  g.means.resize(3 * n);
  g.rotations.resize(4 * n);
  g.scales.resize(3 * n);
  g.opacities.resize(n);
  g.colors.resize(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const Gaussian& x = cloud.gaussians[i];
    for (int k = 0; k < 3; ++k) {
      g.means[3 * i + k] = x.mean[k];
      g.scales[3 * i + k] = x.log_scale[k];
      g.colors[3 * i + k] = x.color[k];
    }
    for (int k = 0; k < 4; ++k) g.rotations[4 * i + k] = x.rotation[k];
    g.opacities[i] = x.opacity_logit;
  }
  for (const auto& b : model.trainable()) {
    const Vec6 v = b.vector();
    g.bases.insert(g.bases.end(), v.data(), v.data() + 6);
  }
  return g;
}

void unpack(const Groups& g, GaussianCloud& cloud, MotionModel& model) {
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    Gaussian& x = cloud.gaussians[i];
    for (int k = 0; k < 3; ++k) {
      x.mean[k] = g.means[3 * i + k];
      x.log_scale[k] = std::clamp(g.scales[3 * i + k], kMinLogScale, kMaxLogScale);
      x.color[k] = std::clamp(g.colors[3 * i + k], 0.0, 1.0);
    }
    Quat4 q(g.rotations[4 * i], g.rotations[4 * i + 1], g.rotations[4 * i + 2],
            g.rotations[4 * i + 3]);
    const double qn = q.norm();
    x.rotation = qn > 0.0 ? Quat4(q / qn) : Quat4(1.0, 0.0, 0.0, 0.0);
    x.opacity_logit = g.opacities[i];
  }
  auto& tr = model.trainable();
  for (std::size_t b = 0; b < tr.size(); ++b) {
    tr[b] = Twist::from_vector(Eigen::Map<const Vec6>(g.bases.data() + 6 * b));
  }
}

struct Optimizer {
  AdamState means, rotations, scales, opacities, colors, coeffs, bases;

  void gather(const ResampledScene& res, const GaussianCloud& old_cloud, std::size_t row_stride) {
    means.gather(res.origin, 3);
    rotations.gather(res.origin, 4);
    scales.gather(res.origin, 3);
    opacities.gather(res.origin, 1);
    colors.gather(res.origin, 3);
    if (!coeffs.m.empty()) {
      const auto old_rows = old_cloud.motion_rows();
      std::vector<std::size_t> row_origin;
      for (std::size_t k = 0; k < res.origin.size(); ++k) {
        if (res.cloud.is_dynamic(k)) {
          row_origin.push_back(static_cast<std::size_t>(old_rows[res.origin[k]]));
        }
      }
      coeffs.gather(row_origin, row_stride);
    }
  }
};

/// Per-Gaussian accumulation of screen-space gradients between density steps.
struct DensifyAccumulator {
  std::vector<double> grad_sum;
  std::vector<std::size_t> seen;
  std::vector<Vec3> mean_grad;

  void reset(std::size_t n) {
    grad_sum.assign(n, 0.0);
    seen.assign(n, 0);
    mean_grad.assign(n, Vec3::Zero());
  }

  void add(const GradientBuffer& gb, int width, int height) {
    for (std::size_t i = 0; i < grad_sum.size(); ++i) {
      if (!gb.visible[i]) continue;
      const Vec2 ndc(gb.means2d[i].x() * 0.5 * width, gb.means2d[i].y() * 0.5 * height);
      grad_sum[i] += ndc.norm();
      mean_grad[i] += gb.means[i];
      ++seen[i];
    }
  }

  DensifyStats stats() const {
    DensifyStats s;
    s.grad_norm.resize(grad_sum.size());
    for (std::size_t i = 0; i < grad_sum.size(); ++i) {
      s.grad_norm[i] = seen[i] > 0 ? grad_sum[i] / static_cast<double>(seen[i]) : 0.0;
    }
    s.mean_grad = mean_grad;
    return s;
  }
};

std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  return order;
}

class Trainer {
 public:
  Trainer(const SceneDataset& data, const FitConfig& cfg, const FitHooks& hooks)
      : data_(data), cfg_(cfg), hooks_(hooks), rng_(cfg.schedule.seed) {
    opts_.workers = cfg.schedule.workers;
  }

  FitResult run() {
    const auto& s = cfg_.schedule;
    const std::size_t F = data_.frame_count();
    const std::size_t t0 = canonical_frame(F);
    t0_ = t0;

    cloud_ = init_cloud(data_, s.init_gaussians, s.init_opacity, s.seed);
    if (s.freeze_motion) {
      model_ = MotionModel(cloud_.dynamic_count(), F, s.basis_count);
    } else {
      MotionInit mi = init_motion(data_, cloud_, s.basis_count, s.seed);
      if (mi.fallback) result_.warnings.push_back(mi.warning);
      model_ = std::move(mi.model);
    }
    rebind(t0);

    // Phase 1: motion only, against depth and tracks.
    if (!s.freeze_motion && s.init_iters > 0) {
      LossTerms acc;
      std::vector<std::size_t> order;
      for (std::size_t it = 0; it < s.init_iters; ++it) {
        if (order.empty()) {
          order = shuffled(F, rng_);
          std::reverse(order.begin(), order.end());
        }
        const std::size_t t = order.back();
        order.pop_back();
        acc += step(t, /*joint=*/false, nullptr);
      }
      acc /= static_cast<double>(s.init_iters);
      log_epoch(0, acc);
    }

    // Phase 2: joint optimization.
    if (s.downsample_factor < 1.0) {
      resample(downsample(cloud_, model_, s.downsample_factor, s.seed + 1), t0);
    }
    const double size_threshold = s.densify_size_fraction * scene_extent(cloud_);
    const std::size_t total_steps = s.joint_epochs * F;
    DensifyAccumulator dens;
    dens.reset(cloud_.size());
    std::size_t global = 0;
    for (std::size_t epoch = 1; epoch <= s.joint_epochs; ++epoch) {
      LossTerms acc;
      for (std::size_t t : shuffled(F, rng_)) {
        acc += step(t, /*joint=*/true, &dens);
        ++global;
        if (s.densify && global % s.densify_every == 0 && global <= total_steps / 2) {
          DensifyOptions o;
          o.grad_threshold = s.densify_grad_threshold;
          o.size_threshold = size_threshold;
          o.prune_opacity = s.prune_opacity;
          o.seed = s.seed + global;
          resample(densify_and_prune(cloud_, model_, dens.stats(), o), t0);
          dens.reset(cloud_.size());
        }
      }
      acc /= static_cast<double>(F);
      log_epoch(epoch, acc);
    }
    result_.cloud = std::move(cloud_);
    result_.model = std::move(model_);
    return std::move(result_);
  }

 private:
  void rebind(std::size_t t0) {
    bindings_ = bind_tracks(data_.tracks, data_.depths, data_.trajectory, cloud_, model_, t0,
                            cfg_.schedule.track_neighbors);
  }

  void resample(ResampledScene res, std::size_t t0) {
    opt_.gather(res, cloud_, model_.frames() * model_.basis_count());
    cloud_ = std::move(res.cloud);
    model_ = std::move(res.model);
    if (cloud_.size() == 0) {
      throw DivergenceError("fit: every Gaussian was pruned");
    }
    rebind(t0);
  }

  LossTerms step(std::size_t t, bool joint, DensifyAccumulator* dens) {
    const auto& s = cfg_.schedule;
    const PosedCloud posed = pose_at_time(cloud_, model_, t);
    const Camera cam = data_.trajectory.camera(t);
    const RenderTarget target = render(posed, cam, s.background, opts_);

    FrameInputs in;
    in.rgb = joint ? &data_.frames[t] : nullptr;
    in.depth = &data_.depths[t];
    in.tracks = &data_.tracks;
    in.bindings = &bindings_;
    in.rgb_terms = joint;
    LossConfig lc = cfg_.loss;
    if (s.freeze_motion) {
      lc.w_coeff = 0.0;
      lc.w_smooth = 0.0;
    }
    LossResult L;
    try {
      L = loss(target, posed, cam, in, model_, lc);
    } catch (const DivergenceError& e) {
      diverged(e.what());
    }
    PosedGradients pg = render_backward(target, L.d_rgb, L.d_depth, L.d_alpha);
    const GradientBuffer gb = backprop_motion(pg, cloud_, model_, t);
    if (dens != nullptr) dens->add(gb, cam.intrinsics.width, cam.intrinsics.height);

    Groups p = pack(cloud_, model_);
    const double lr = s.lr;
    const auto& sc = s.lr_scale;
    auto upd = [&](std::vector<double>& params, const std::vector<double>& grads, AdamState& st,
                   double scale) {
      if (scale == 0.0) return;
      adam_step(params, grads, st, lr * scale, s.beta1, s.beta2, s.adam_eps);
    };

    if (joint) {
      const std::size_t n = cloud_.size();
      std::vector<double> gm(3 * n), gr(4 * n), gs(3 * n), go(n), gc(3 * n);
      for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) {
          gm[3 * i + k] = gb.means[i][k];
          gs[3 * i + k] = gb.log_scales[i][k];
          gc[3 * i + k] = gb.colors[i][k];
        }
        for (int k = 0; k < 4; ++k) gr[4 * i + k] = gb.rotations[i][k];
        go[i] = gb.opacity_logits[i];
      }
      upd(p.means, gm, opt_.means, sc.means);
      upd(p.rotations, gr, opt_.rotations, sc.rotations);
      upd(p.scales, gs, opt_.scales, sc.scales);
      upd(p.opacities, go, opt_.opacities, sc.opacities);
      upd(p.colors, gc, opt_.colors, sc.colors);
    }
    if (!s.freeze_motion) {
      const std::size_t B = model_.basis_count(), F = model_.frames();
      std::vector<double> gcoef = std::move(L.d_coeffs);
      for (std::size_t r = 0; r < model_.dynamic_count(); ++r) {
        for (std::size_t b = 0; b < B; ++b) gcoef[(r * F + t) * B + b] += gb.coeffs[r * B + b];
        // The canonical frame is the reference pose; its coefficients stay zero.
        for (std::size_t b = 0; b < B; ++b) gcoef[(r * F + t0_) * B + b] = 0.0;
      }
      upd(model_.coeffs(), gcoef, opt_.coeffs, sc.coeffs);
      std::vector<double> gbases;
      for (std::size_t j = 0; j < gb.trainable.size(); ++j) {
        const Vec6 v = gb.trainable[j] + L.d_bases[j];
        gbases.insert(gbases.end(), v.data(), v.data() + 6);
      }
      upd(p.bases, gbases, opt_.bases, sc.bases);
    }
    unpack(p, cloud_, model_);

    for (double c : model_.coeffs()) {
      if (!std::isfinite(c)) diverged("motion coefficients became non-finite");
    }
    return L.terms;
  }

  [[noreturn]] void diverged(const std::string& why) {
    std::string msg = "fit diverged: " + why;
    if (!hooks_.dump_dir.empty()) {
      try {
        save_state(cloud_, model_, hooks_.dump_dir);
        msg += "; state written to " + hooks_.dump_dir.string();
      } catch (const Error& e) {
        msg += "; state dump failed: " + std::string(e.what());
      }
    }
    throw DivergenceError(msg);
  }

  void log_epoch(std::size_t epoch, const LossTerms& terms) {
    EpochLog row;
    row.epoch = epoch;
    row.terms = terms;
    const Evaluation ev = evaluate(cloud_, model_, data_, cfg_.schedule.background, opts_.workers);
    row.psnr = ev.psnr;
    row.ssim = ev.ssim;
    row.gaussians = cloud_.size();
    result_.log.push_back(row);
    if (hooks_.on_epoch) hooks_.on_epoch(row);
  }

  const SceneDataset& data_;
  const FitConfig& cfg_;
  const FitHooks& hooks_;
  std::mt19937_64 rng_;
  RenderOptions opts_;
  GaussianCloud cloud_;
  MotionModel model_;
  std::vector<TrackBinding> bindings_;
  std::size_t t0_ = 0;
  Optimizer opt_;
  FitResult result_;
};

}  // namespace

Evaluation evaluate(const GaussianCloud& cloud, const MotionModel& model, const SceneDataset& data,
                    const Vec3& background, int workers) {
  RenderOptions opts;
  opts.workers = workers;
  Evaluation ev;
  std::size_t n = 0;
  auto add = [&](std::size_t frame, const Camera& cam, const Image& ref) {
    const RenderTarget r = render(pose_at_time(cloud, model, frame), cam, background, opts);
    ev.psnr += psnr(r.rgb, ref);
    ev.ssim += ssim(r.rgb, ref);
    ++n;
  };
  if (!data.holdout.empty()) {
    for (const auto& v : data.holdout) {
      add(v.frame, Camera{data.trajectory.intrinsics, v.pose}, v.image);
    }
  } else {
    for (std::size_t t = 0; t < data.frame_count(); ++t) {
      add(t, data.trajectory.camera(t), data.frames[t]);
    }
  }
  if (n > 0) {
    ev.psnr /= static_cast<double>(n);
    ev.ssim /= static_cast<double>(n);
  }
  return ev;
}

std::string metrics_csv_header() {
  return "epoch,total,rgb,ssim,depth,track,coeff,smooth,psnr,ssim_score,gaussians";
}

std::string metrics_csv_row(const EpochLog& r) {
  std::ostringstream out;
  out << std::setprecision(10) << r.epoch << ',' << r.terms.total << ',' << r.terms.rgb << ','
      << r.terms.ssim << ',' << r.terms.depth << ',' << r.terms.track << ',' << r.terms.coeff
      << ',' << r.terms.smooth << ',' << r.psnr << ',' << r.ssim << ',' << r.gaussians;
  return out.str();
}

FitResult fit(const SceneDataset& data, const FitConfig& cfg, const FitHooks& hooks) {
  cfg.validate();
  data.validate();
  return Trainer(data, cfg, hooks).run();
}

}  // namespace msplat
