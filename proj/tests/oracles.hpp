// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls into the code under test except plain data types.
#pragma once

#include "msplat/camera.hpp"
#include "msplat/image.hpp"
#include "msplat/scene.hpp"
#include "msplat/se3.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

using msplat::Mat3;
using msplat::Mat4;
using msplat::Vec2;
using msplat::Vec3;
using msplat::Vec6;

// Hat operator for an (omega, v) twist.
inline Mat4 hat(const Vec6& xi) {
  Mat4 m = Mat4::Zero();
  m(0, 1) = -xi[2];
  m(0, 2) = xi[1];
  m(1, 0) = xi[2];
  m(1, 2) = -xi[0];
  m(2, 0) = -xi[1];
  m(2, 1) = xi[0];
  m(0, 3) = xi[3];
  m(1, 3) = xi[4];
  m(2, 3) = xi[5];
  return m;
}

// Truncated power series of the matrix exponential. Scaling and squaring keeps
// the series well inside its fast-converging range.
inline Mat4 expm_series(const Mat4& a, int terms = 30) {
  int squarings = 0;
  double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  while (norm > 0.5) {
    norm *= 0.5;
    ++squarings;
  }
  const Mat4 x = a / std::pow(2.0, squarings);
  Mat4 sum = Mat4::Identity();
  Mat4 term = Mat4::Identity();
  for (int k = 1; k < terms; ++k) {
    term = term * x / static_cast<double>(k);
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

inline Vec2 project(const Vec3& x, const msplat::Intrinsics& K, const Mat4& world_to_cam) {
  Eigen::Matrix<double, 3, 4> P = Eigen::Matrix<double, 3, 4>::Zero();
  P.block<3, 3>(0, 0) = K.matrix();
  const Eigen::Vector4d xh(x.x(), x.y(), x.z(), 1.0);
  const Eigen::Vector3d u = P * world_to_cam * xh;
  return {u.x() / u.z(), u.y() / u.z()};
}

// Plain pinhole ray for pixel (u, v), computed from the 4x4 pose.
inline void ray(double u, double v, const msplat::Intrinsics& K, const Mat4& world_to_cam,
                Vec3& origin, Vec3& dir) {
  const Mat4 inv = world_to_cam.inverse();
  origin = inv.block<3, 1>(0, 3);
  const Vec3 dc((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
  dir = (inv.block<3, 3>(0, 0) * dc).normalized();
}

inline Mat3 quat_matrix(const Eigen::Vector4d& q) {
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized().toRotationMatrix();
}

struct Gauss {
  Vec3 mean;
  Mat3 rotation;
  Vec3 scale;  // linear
  double opacity;
  Vec3 color;
};

struct Composite {
  msplat::Image rgb, depth, alpha;
};

// Per-pixel evaluation of every Gaussian in one global depth order. Matches
// the renderer's conventions: integer pixel centres, 0.3 px^2 floor, a kernel
// tapered to zero at 3 sigma, alpha clamp 0.99 and early stop at T < 1e-4.
inline Composite brute_force(const std::vector<Gauss>& gs, const msplat::Intrinsics& K,
                             const Mat4& world_to_cam, const Vec3& bg) {
  struct S {
    Vec2 mu;
    Mat3 dummy;
    double a, b, c;  // conic
    double z, o;
    Vec3 color;
  };
  const Mat3 R = world_to_cam.block<3, 3>(0, 0);
  const Vec3 t = world_to_cam.block<3, 1>(0, 3);
  std::vector<S> splats;
  std::vector<double> depth_keys;
  for (const auto& g : gs) {
    const Vec3 p = R * g.mean + t;
    if (!(p.z() > 0.01)) continue;
    Eigen::Matrix<double, 2, 3> J;
    J << K.fx / p.z(), 0.0, -K.fx * p.x() / (p.z() * p.z()), 0.0, K.fy / p.z(),
        -K.fy * p.y() / (p.z() * p.z());
    const Mat3 S3 = g.rotation * g.scale.cwiseProduct(g.scale).asDiagonal() *
                    g.rotation.transpose();
    Eigen::Matrix2d c2 = (J * R) * S3 * (J * R).transpose();
    c2(0, 0) += 0.3;
    c2(1, 1) += 0.3;
    const double det = c2(0, 0) * c2(1, 1) - c2(0, 1) * c2(1, 0);
    S s;
    s.mu = Vec2(K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy);
    s.a = c2(1, 1) / det;
    s.b = -0.5 * (c2(0, 1) + c2(1, 0)) / det;
    s.c = c2(0, 0) / det;
    s.z = p.z();
    s.o = g.opacity;
    s.color = g.color;
    splats.push_back(s);
  }
  std::vector<std::size_t> order(splats.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return splats[i].z < splats[j].z; });
  const double floor = std::exp(-4.5);
  Composite out{msplat::Image(K.width, K.height, 3), msplat::Image(K.width, K.height, 1),
                msplat::Image(K.width, K.height, 1)};
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      double T = 1.0, d = 0.0;
      Vec3 c = Vec3::Zero();
      for (auto i : order) {
        const S& s = splats[i];
        const double dx = x - s.mu.x(), dy = y - s.mu.y();
        const double m2 = s.a * dx * dx + 2.0 * s.b * dx * dy + s.c * dy * dy;
        if (m2 >= 9.0) continue;
        const double k = (std::exp(-0.5 * m2) - floor) / (1.0 - floor);
        if (k <= 0.0) continue;
        const double al = std::min(0.99, s.o * k);
        c += T * al * s.color;
        d += T * al * s.z;
        T *= 1.0 - al;
        if (T < 1e-4) break;
      }
      c += T * bg;
      for (int ch = 0; ch < 3; ++ch) out.rgb.at(x, y, ch) = c[ch];
      out.depth.at(x, y) = d;
      out.alpha.at(x, y) = 1.0 - T;
    }
  }
  return out;
}

// Random small scene in front of a camera looking at the origin.
struct RandomScene {
  msplat::GaussianCloud cloud;
  msplat::Camera camera;
};

inline RandomScene random_scene(std::mt19937_64& rng, int n, int width, int height) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  RandomScene s;
  for (int i = 0; i < n; ++i) {
    msplat::Gaussian g;
    g.mean = Vec3(0.8 * U(rng), 0.6 * U(rng), 0.5 * U(rng));
    g.rotation = Eigen::Vector4d(1.0 + 0.3 * U(rng), U(rng), U(rng), U(rng)).normalized();
    for (int k = 0; k < 3; ++k) g.log_scale[k] = std::log(0.05 + 0.1 * (U(rng) + 1.0));
    g.opacity_logit = msplat::logit(0.5 + 0.45 * U(rng));
    g.color = Vec3(0.5 + 0.5 * U(rng), 0.5 + 0.5 * U(rng), 0.5 + 0.5 * U(rng));
    s.cloud.push_back(g, true);
  }
  const double f = 0.9 * width;
  s.camera.intrinsics = {f, f, 0.5 * (width - 1), 0.5 * (height - 1), width, height};
  s.camera.extrinsics = msplat::look_at(Vec3(0.4 * U(rng), 0.3 * U(rng), -3.0), Vec3::Zero());
  return s;
}

inline std::vector<Gauss> to_gauss(const msplat::GaussianCloud& cloud) {
  std::vector<Gauss> out;
  for (const auto& g : cloud.gaussians) {
    out.push_back({g.mean, quat_matrix(g.rotation), g.log_scale.array().exp(),
                   1.0 / (1.0 + std::exp(-g.opacity_logit)), g.color});
  }
  return out;
}

inline double max_abs_diff(const msplat::Image& a, const msplat::Image& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

// Scalar-loop SSIM: 11x11 Gaussian window (sigma 1.5), zero padding outside
// the image, C1 = 0.01^2, C2 = 0.03^2, channel mean.
inline double ssim(const msplat::Image& x, const msplat::Image& y) {
  double w[11], ws = 0.0;
  for (int i = 0; i < 11; ++i) {
    w[i] = std::exp(-0.5 * (i - 5) * (i - 5) / (1.5 * 1.5));
    ws += w[i];
  }
  for (double& v : w) v /= ws;
  const double C1 = 1e-4, C2 = 9e-4;
  double total = 0.0;
  for (int c = 0; c < x.channels; ++c) {
    for (int py = 0; py < x.height; ++py) {
      for (int px = 0; px < x.width; ++px) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int dy = -5; dy <= 5; ++dy) {
          for (int dx = -5; dx <= 5; ++dx) {
            const int qx = px + dx, qy = py + dy;
            if (qx < 0 || qy < 0 || qx >= x.width || qy >= x.height) continue;
            const double ww = w[dx + 5] * w[dy + 5];
            const double a = x.at(qx, qy, c), b = y.at(qx, qy, c);
            mx += ww * a;
            my += ww * b;
            sxx += ww * a * a;
            syy += ww * b * b;
            sxy += ww * a * b;
          }
        }
        const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
        total += ((2 * mx * my + C1) * (2 * cxy + C2)) /
                 ((mx * mx + my * my + C1) * (vx + vy + C2));
      }
    }
  }
  return total / (static_cast<double>(x.width) * x.height * x.channels);
}

}  // namespace oracle
