// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "msplat/errors.hpp"
#include "msplat/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_map>

namespace msplat {

namespace {

constexpr std::size_t kMinClusterSize = 5;
constexpr double kRigidGain = 0.5;
// Depth residuals are noisier than the tracks; they mainly fix the motion along the ray.
constexpr double kDepthWeight = 0.05;

Vec3 back_project(double u, double v, double z, const Camera& cam) {
  const Intrinsics& K = cam.intrinsics;
  const Vec3 pc((u - K.cx) / K.fx * z, (v - K.cy) / K.fy * z, z);
  const RigidTransform& T = cam.extrinsics.pose;
  return T.rotation.transpose() * (pc - T.translation);
}

double depth_at(const Image& depth, const Vec2& uv) {
  const int x = static_cast<int>(std::lround(uv.x()));
  const int y = static_cast<int>(std::lround(uv.y()));
  if (x < 0 || y < 0 || x >= depth.width || y >= depth.height) return 0.0;
  return depth.at(x, y);
}

/// Uniform hash grid over points for nearest-neighbour queries.
class PointGrid {
 public:
  PointGrid(const std::vector<Vec3>& pts, double cell) : pts_(pts), cell_(cell) {
    for (std::size_t i = 0; i < pts.size(); ++i) cells_[key(cell_of(pts[i]))].push_back(i);
  }

  /// Distances to the k nearest points other than `self`, ascending.
  std::vector<double> nearest(std::size_t self, std::size_t k) const {
    const Vec3& p = pts_[self];
    const Eigen::Vector3i c = cell_of(p);
    std::vector<double> best;
    for (int r = 0;; ++r) {
      for (int dx = -r; dx <= r; ++dx) {
        for (int dy = -r; dy <= r; ++dy) {
          for (int dz = -r; dz <= r; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
            auto it = cells_.find(key(c + Eigen::Vector3i(dx, dy, dz)));
            if (it == cells_.end()) continue;
            for (std::size_t j : it->second) {
              if (j != self) best.push_back((pts_[j] - p).norm());
            }
          }
        }
      }
      // Every point outside ring r is at least r * cell away.
      if (best.size() >= k) {
        std::nth_element(best.begin(), best.begin() + static_cast<std::ptrdiff_t>(k - 1), best.end());
        if (best[k - 1] <= r * cell_) break;
      }
      if (r > 64 && best.size() >= k) break;
      if (r > 4096) break;
    }
    std::sort(best.begin(), best.end());
    if (best.size() > k) best.resize(k);
    return best;
  }

 private:
  Eigen::Vector3i cell_of(const Vec3& p) const {
    return Eigen::Vector3i(static_cast<int>(std::floor(p.x() / cell_)),
                           static_cast<int>(std::floor(p.y() / cell_)),
                           static_cast<int>(std::floor(p.z() / cell_)));
  }
  static std::uint64_t key(const Eigen::Vector3i& c) {
    const auto u = [](int v) { return static_cast<std::uint64_t>(static_cast<std::uint32_t>(v + (1 << 20))) & 0x1FFFFF; };
    return (u(c.x()) << 42) | (u(c.y()) << 21) | u(c.z());
  }

  const std::vector<Vec3>& pts_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

/// Chooses `k` of `n` indices uniformly without replacement, returned sorted.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (k >= n) return idx;
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Squared residuals of a cluster motion T at frame t: reprojection of the
// carried anchors against the 2D tracks, plus a weak depth term in pixel units.
double cluster_cost(const SceneDataset& data, const std::vector<std::size_t>& ids,
                    const std::vector<Vec3>& anchors, std::size_t t, const RigidTransform& T) {
  const Camera cam = data.trajectory.camera(t);
  double cost = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Vec3 x = T.apply(anchors[i]);
    const Vec3 pc = cam.extrinsics.pose.apply(x);
    if (pc.z() <= kMinProjectionDepth) return std::numeric_limits<double>::infinity();
    const Vec2& uv = data.tracks.position(ids[i], t);
    const Vec2 pred(cam.intrinsics.fx * pc.x() / pc.z() + cam.intrinsics.cx,
                    cam.intrinsics.fy * pc.y() / pc.z() + cam.intrinsics.cy);
    cost += (pred - uv).squaredNorm();
    const double z = depth_at(data.depths[t], uv);
    if (z > 0.0) {
      const double r = kDepthWeight * cam.intrinsics.fx * (pc.z() - z) / pc.z();
      cost += r * r;
    }
  }
  return cost;
}

// Gauss-Newton on left perturbations exp(d) * T; `dims` selects the active
// twist components (all six, or the translation part only).
RigidTransform refine_motion(const SceneDataset& data, const std::vector<std::size_t>& ids,
                             const std::vector<Vec3>& anchors, std::size_t t, RigidTransform T,
                             bool rotation, double* cost_out) {
  const int first = rotation ? 0 : 3;
  const int n = 6 - first;
  const Camera cam = data.trajectory.camera(t);
  auto residuals = [&](const RigidTransform& M) {
    Eigen::VectorXd r(3 * static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const Vec3 pc = cam.extrinsics.pose.apply(M.apply(anchors[i]));
      const double iz = 1.0 / std::max(pc.z(), kMinProjectionDepth);
      const Vec2& uv = data.tracks.position(ids[i], t);
      const auto e = static_cast<Eigen::Index>(3 * i);
      r[e] = cam.intrinsics.fx * pc.x() * iz + cam.intrinsics.cx - uv.x();
      r[e + 1] = cam.intrinsics.fy * pc.y() * iz + cam.intrinsics.cy - uv.y();
      const double z = depth_at(data.depths[t], uv);
      r[e + 2] = z > 0.0 ? kDepthWeight * cam.intrinsics.fx * (pc.z() - z) * iz : 0.0;
    }
    return r;
  };
  constexpr double h = 1e-6;
  for (int it = 0; it < 10; ++it) {
    const Eigen::VectorXd r0 = residuals(T);
    Eigen::MatrixXd J(r0.size(), n);
    for (int c = 0; c < n; ++c) {
      Vec6 d = Vec6::Zero();
      d[first + c] = h;
      J.col(c) = (residuals(compose(se3_exp(Twist::from_vector(d)), T)) - r0) / h;
    }
    Eigen::MatrixXd H = J.transpose() * J;
    H.diagonal().array() += 1e-9 + 1e-6 * H.diagonal().array();
    const Eigen::VectorXd step = H.ldlt().solve(-J.transpose() * r0);
    if (!step.allFinite()) break;
    Vec6 d = Vec6::Zero();
    d.segment(first, n) = step;
    const RigidTransform next = compose(se3_exp(Twist::from_vector(d)), T);
    if (residuals(next).squaredNorm() > r0.squaredNorm()) break;
    T = next;
    if (step.norm() < 1e-10) break;
  }
  *cost_out = cluster_cost(data, ids, anchors, t, T);
  return T;
}

// Per-frame twists carrying the members' canonical anchors to every frame,
// fit to the 2D tracks. The rigid model is kept only when it explains the
// tracks much better than a pure translation, and the translation only when
// it clearly beats standing still; otherwise noise shows up as motion.
std::vector<Twist> cluster_twists(const SceneDataset& data,
                                  const std::vector<std::size_t>& track_ids,
                                  const std::vector<std::vector<Vec3>>& lifted,
                                  const std::vector<std::size_t>& members, std::size_t t0) {
  const std::size_t F = lifted[members.front()].size();
  const auto n = static_cast<Eigen::Index>(members.size());
  std::vector<std::size_t> ids;
  std::vector<Vec3> anchors;
  for (std::size_t m : members) {
    ids.push_back(track_ids[m]);
    anchors.push_back(lifted[m][t0]);
  }
  std::vector<Twist> still(F), shift(F), rigid(F);
  double still_cost = 0.0, shift_cost = 0.0, rigid_cost = 0.0;
  bool rigid_ok = n >= 3;
  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (Eigen::Index c = 0; c < n; ++c) src.col(c) = anchors[static_cast<std::size_t>(c)];
  for (std::size_t t = 0; t < F; ++t) {
    if (t == t0) continue;
    for (Eigen::Index c = 0; c < n; ++c) dst.col(c) = lifted[members[static_cast<std::size_t>(c)]][t];
    still_cost += cluster_cost(data, ids, anchors, t, RigidTransform{});
    double cost = 0.0;
    const RigidTransform Ts = refine_motion(
        data, ids, anchors, t, RigidTransform{Mat3::Identity(), (dst - src).rowwise().mean()},
        false, &cost);
    shift[t] = Twist{Vec3::Zero(), Ts.translation};
    shift_cost += cost;
    if (!rigid_ok) continue;
    const Mat4 M = Eigen::umeyama(src, dst, false);
    const RigidTransform Tr = refine_motion(
        data, ids, anchors, t, RigidTransform{M.topLeftCorner<3, 3>(), M.topRightCorner<3, 1>()},
        true, &cost);
    try {
      rigid[t] = se3_log(Tr);
    } catch (const InvalidArgument&) {
      rigid_ok = false;
      continue;
    }
    rigid_cost += cost;
  }
  if (rigid_ok && rigid_cost < kRigidGain * shift_cost) return rigid;
  // Depth-lifted tracks jitter a little even on a still cluster.
  return shift_cost < kRigidGain * still_cost ? shift : still;
}

}  // namespace

std::vector<double> knn_mean_distance(const std::vector<Vec3>& points, std::size_t k) {
  std::vector<double> out(points.size(), 0.0);
  if (points.size() < 2 || k == 0) return out;
  k = std::min(k, points.size() - 1);
  Vec3 lo = points.front(), hi = points.front();
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 ext = (hi - lo).cwiseMax(1e-12);
  // Roughly k points per cell for a surface-like distribution.
  const double area = ext.x() * ext.y() + ext.y() * ext.z() + ext.x() * ext.z();
  double cell = std::sqrt(area * static_cast<double>(k) / static_cast<double>(points.size()));
  cell = std::max(cell, ext.maxCoeff() * 1e-4);
  const PointGrid grid(points, cell);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto d = grid.nearest(i, k);
    double s = 0.0;
    for (double v : d) s += v;
    out[i] = d.empty() ? 0.0 : s / static_cast<double>(d.size());
  }
  return out;
}

GaussianCloud init_cloud(const SceneDataset& data, std::size_t n, double init_opacity,
                         std::uint64_t seed) {
  if (data.frames.empty()) throw ValidationError("init_cloud: dataset has no frames");
  const std::size_t t0 = canonical_frame(data.frame_count());
  if (t0 >= data.depths.size() || data.depths[t0].data.empty()) {
    throw ValidationError("init_cloud: canonical frame " + std::to_string(t0) + " has no depth");
  }
  const Image& depth = data.depths[t0];
  const Image& rgb = data.frames[t0];
  const Camera cam = data.trajectory.camera(t0);

  std::vector<std::size_t> valid;
  for (std::size_t p = 0; p < depth.pixel_count(); ++p) {
    const double z = depth.data[p];
    if (std::isfinite(z) && z > 0.0) valid.push_back(p);
  }
  if (valid.empty()) {
    throw ValidationError("init_cloud: canonical frame " + std::to_string(t0) +
                          " has no valid depth");
  }
  std::mt19937_64 rng(seed);
  const auto chosen = sample_indices(valid.size(), n, rng);

  std::vector<Vec3> pts;
  pts.reserve(chosen.size());
  for (std::size_t c : chosen) {
    const std::size_t p = valid[c];
    const int x = static_cast<int>(p % depth.width), y = static_cast<int>(p / depth.width);
    pts.push_back(back_project(x, y, depth.data[p], cam));
  }
  const auto spacing = knn_mean_distance(pts, 3);

  GaussianCloud cloud;
  const bool masked = !data.masks.empty();
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    const std::size_t p = valid[chosen[k]];
    Gaussian g;
    g.mean = pts[k];
    const double s = std::clamp(spacing[k], 1e-5, 1e2);
    g.log_scale = Vec3::Constant(std::log(s));
    g.opacity_logit = logit(init_opacity);
    for (int c = 0; c < 3; ++c) g.color[c] = rgb.data[p * 3 + c];
    const bool dynamic = !masked || data.masks[t0].data[p] > 0.5;
    cloud.push_back(g, dynamic);
  }
  return cloud;
}

KMeansResult kmeans(const std::vector<Eigen::VectorXd>& x, std::size_t k, std::uint64_t seed,
                    std::size_t max_iters) {
  if (k == 0) throw InvalidArgument("kmeans: k must be positive");
  if (x.size() < k) throw InvalidArgument("kmeans: fewer points than clusters");
  std::mt19937_64 rng(seed);
  KMeansResult res;
  std::uniform_int_distribution<std::size_t> first(0, x.size() - 1);
  res.centers.push_back(x[first(rng)]);
  std::vector<double> d2(x.size(), std::numeric_limits<double>::infinity());
  while (res.centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      d2[i] = std::min(d2[i], (x[i] - res.centers.back()).squaredNorm());
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng), acc = 0.0;
      pick = x.size() - 1;
      for (std::size_t i = 0; i < x.size(); ++i) {
        acc += d2[i];
        if (acc >= r && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    res.centers.push_back(x[pick]);
  }

  res.labels.assign(x.size(), k);
  for (std::size_t it = 0; it < max_iters; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        const double d = (x[i] - res.centers[j]).squaredNorm();
        if (d < bd) {
          bd = d;
          best = j;
        }
      }
      if (res.labels[i] != best) {
        res.labels[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    for (std::size_t j = 0; j < k; ++j) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(x.front().size());
      std::size_t count = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (res.labels[i] == j) {
          sum += x[i];
          ++count;
        }
      }
      if (count > 0) res.centers[j] = sum / static_cast<double>(count);
    }
  }
  return res;
}

MotionInit init_motion(const SceneDataset& data, const GaussianCloud& cloud,
                       std::size_t basis_count, std::uint64_t seed) {
  const std::size_t F = data.frame_count();
  const std::size_t t0 = canonical_frame(F);
  const std::size_t k = basis_count - MotionModel::kFixedCount;
  MotionInit out;
  out.model = MotionModel(cloud.dynamic_count(), F, basis_count);

  std::mt19937_64 rng(seed ^ 0x6d6f74696f6eULL);
  std::normal_distribution<double> small(0.0, 0.01);
  for (auto& b : out.model.trainable()) b = Twist{Vec3::Zero(), Vec3(small(rng), small(rng), small(rng))};
  if (k == 0) return out;

  // Lift tracks visible with valid depth in every frame.
  const TrackSet& tracks = data.tracks;
  std::vector<std::vector<Vec3>> lifted;
  for (std::size_t q = 0; q < tracks.queries; ++q) {
    std::vector<Vec3> traj;
    for (std::size_t t = 0; t < F; ++t) {
      if (!tracks.is_visible(q, t)) break;
      const Vec2& uv = tracks.position(q, t);
      const double z = depth_at(data.depths[t], uv);
      if (!(z > 0.0) || !std::isfinite(z)) break;
      traj.push_back(back_project(uv.x(), uv.y(), z, data.trajectory.camera(t)));
    }
    if (traj.size() == F) {
      lifted.push_back(std::move(traj));
      out.track_ids.push_back(q);
    }
  }
  // Small clusters make the rigid fit unstable; spare bases stay near zero.
  const std::size_t used = std::min(k, lifted.size() / kMinClusterSize);
  if (used == 0) {
    out.fallback = true;
    out.warning = "init_motion: " + std::to_string(lifted.size()) +
                  " usable tracks, at least " + std::to_string(kMinClusterSize) +
                  " are needed; coefficients left at zero";
    out.track_ids.clear();
    return out;
  }

  std::vector<Eigen::VectorXd> features;
  std::vector<Vec3> anchors;
  for (const auto& traj : lifted) {
    Eigen::VectorXd f(3 * F);
    for (std::size_t t = 0; t < F; ++t) f.segment<3>(3 * t) = traj[t] - traj[t0];
    features.push_back(std::move(f));
    anchors.push_back(traj[t0]);
  }
  out.clusters = kmeans(features, used, seed);

  const auto nn = knn_mean_distance(anchors, 1);
  std::vector<double> sorted_nn = nn;
  std::sort(sorted_nn.begin(), sorted_nn.end());
  out.tau = sorted_nn[sorted_nn.size() / 2];
  if (!(out.tau > 0.0)) out.tau = 1e-3;

  std::vector<std::size_t> count(k, 0);
  std::vector<Vec3> center(k, Vec3::Zero());
  for (std::size_t i = 0; i < lifted.size(); ++i) {
    ++count[out.clusters.labels[i]];
    center[out.clusters.labels[i]] += anchors[i];
  }
  // Per cluster: a rigid fit of its anchors from t0 to every frame, then the
  // dominant twist direction as the basis and per-frame magnitudes along it.
  std::vector<std::vector<double>> magnitude(k, std::vector<double>(F, 0.0));
  for (std::size_t j = 0; j < k; ++j) {
    if (count[j] == 0) continue;
    center[j] /= static_cast<double>(count[j]);
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < lifted.size(); ++i) {
      if (out.clusters.labels[i] == j) members.push_back(i);
    }
    const std::vector<Twist> xi = cluster_twists(data, out.track_ids, lifted, members, t0);
    Eigen::MatrixXd X(F, 6);
    for (std::size_t t = 0; t < F; ++t) X.row(t) = xi[t].vector().transpose();
    if (X.norm() == 0.0) continue;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinV);
    const Vec6 u = svd.matrixV().col(0);
    out.model.trainable()[j] = Twist::from_vector(u);
    for (std::size_t t = 0; t < F; ++t) magnitude[j][t] = X.row(t).dot(u);
  }

  const auto rows = cloud.motion_rows();
  std::vector<double> w(k);
  for (std::size_t g = 0; g < cloud.size(); ++g) {
    if (rows[g] < 0) continue;
    const Vec3& mu = cloud.gaussians[g].mean;
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      if (count[j] > 0) dmin = std::min(dmin, (mu - center[j]).norm());
    }
    // exp(-d / tau) normalized over clusters; shifted by dmin for range.
    double wsum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      w[j] = count[j] > 0 ? std::exp(-((mu - center[j]).norm() - dmin) / out.tau) : 0.0;
      wsum += w[j];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (w[j] == 0.0) continue;
      for (std::size_t t = 0; t < F; ++t) {
        out.model.coeff(static_cast<std::size_t>(rows[g]), t, MotionModel::kFixedCount + j) =
            w[j] / wsum * magnitude[j][t];
      }
    }
  }
  return out;
}

}  // namespace msplat
