// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "msplat/se3.hpp"

#include "msplat/errors.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace msplat {

namespace {

constexpr double kSmallAngle = 1e-8;
// Below this angle the third-order coefficients lose too many digits to
// cancellation; a three-term series is used instead.
constexpr double kSeriesAngleQ = 1e-2;

bool all_finite(const Vec3& a) { return a.allFinite(); }

}  // namespace

Mat4 Twist::matrix() const {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = skew(omega);
  m.topRightCorner<3, 1>() = v;
  return m;
}

Mat4 RigidTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.transpose();
  out.translation = -(out.rotation * translation);
  return out;
}

Mat3 skew(const Vec3& w) {
  Mat3 s;
  // clang-format off
  s <<     0.0, -w.z(),  w.y(),
         w.z(),    0.0, -w.x(),
        -w.y(),  w.x(),    0.0;
  // clang-format on
  return s;
}

Vec3 vee(const Mat3& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

Mat3 so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 W = skew(omega);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + W + 0.5 * W * W;
  }
  const double a = std::sin(theta) / theta;
  const double h = std::sin(0.5 * theta) / theta;
  const double b = 2.0 * h * h;  // (1 - cos) / theta^2 without cancellation
  return Mat3::Identity() + a * W + b * W * W;
}

Mat3 so3_left_jacobian(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 W = skew(omega);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + 0.5 * W + (1.0 / 6.0) * W * W;
  }
  const double t2 = theta * theta;
  const double h = std::sin(0.5 * theta) / theta;
  const double b = 2.0 * h * h;
  const double c = theta < kSeriesAngleQ ? 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
                                         : (theta - std::sin(theta)) / (t2 * theta);
  return Mat3::Identity() + b * W + c * W * W;
}

Mat3 se3_left_jacobian_q(const Vec3& v, const Vec3& omega) {
  const double theta = omega.norm();
  const double t2 = theta * theta;
  double c2, c3, c4;
  if (theta < kSeriesAngleQ) {
    const double t4 = t2 * t2;
    c2 = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0;
    c3 = 1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0;
    c4 = 1.0 / 120.0 - t2 / 2520.0 + t4 / 120960.0;
  } else {
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    c2 = (theta - s) / (t2 * theta);
    c3 = (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2);
    c4 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta);
  }
  const Mat3 P = skew(v);
  const Mat3 W = skew(omega);
  const Mat3 WP = W * P;
  const Mat3 PW = P * W;
  const Mat3 WPW = WP * W;
  const Mat3 WW = W * W;
  return 0.5 * P + c2 * (WP + PW + WPW) + c3 * (WW * P + PW * W - 3.0 * WPW) +
         c4 * (WPW * W + W * WPW);
}

Eigen::Matrix<double, 6, 6> se3_left_jacobian(const Twist& xi) {
  Eigen::Matrix<double, 6, 6> J = Eigen::Matrix<double, 6, 6>::Zero();
  const Mat3 Jl = so3_left_jacobian(xi.omega);
  J.topLeftCorner<3, 3>() = Jl;
  J.bottomRightCorner<3, 3>() = Jl;
  J.bottomLeftCorner<3, 3>() = se3_left_jacobian_q(xi.v, xi.omega);
  return J;
}

RigidTransform se3_exp(const Twist& xi) {
  if (!all_finite(xi.omega) || !all_finite(xi.v)) {
    throw InvalidArgument("se3_exp: non-finite twist");
  }
  RigidTransform T;
  T.rotation = so3_exp(xi.omega);
  T.translation = so3_left_jacobian(xi.omega) * xi.v;
  return T;
}

Twist se3_log(const RigidTransform& T) {
  const Mat3& R = T.rotation;
  if (!R.allFinite() || !T.translation.allFinite()) {
    throw InvalidArgument("se3_log: non-finite transform");
  }
  const Vec3 axis2 = vee(R - R.transpose());  // 2 sin(theta) * axis
  const double cos_theta = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
  const double theta = std::atan2(0.5 * axis2.norm(), cos_theta);
  if (theta > std::numbers::pi - 1e-6) {
    throw InvalidArgument("se3_log: rotation angle at pi, axis is ambiguous");
  }

  Twist out;
  if (theta < kSmallAngle) {
    out.omega = 0.5 * axis2;
  } else {
    out.omega = (theta / (2.0 * std::sin(theta))) * axis2;
  }

  const Mat3 W = skew(out.omega);
  double k;
  if (theta < kSeriesAngleQ) {
    const double t2 = theta * theta;
    k = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  } else {
    const double half = 0.5 * theta;
    k = (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta);
  }
  const Mat3 Vinv = Mat3::Identity() - 0.5 * W + k * W * W;
  out.v = Vinv * T.translation;
  return out;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

Mat3 orthonormalize(const Mat3& r) {
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) {
    u.col(2) *= -1.0;
  }
  return u * v.transpose();
}

double orthonormality_error(const Mat3& r) {
  const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(r.determinant() - 1.0));
}

void TransformChain::push(const RigidTransform& t) {
  value_ = compose(value_, t);
  ++count_;
  if (period_ > 0 && count_ % period_ == 0) {
    value_.rotation = orthonormalize(value_.rotation);
  }
}

FixedGeneratorSet::FixedGeneratorSet() {
  for (int k = 0; k < 3; ++k) {
    generators_[k].v = Vec3::Unit(k);
    generators_[3 + k].omega = Vec3::Unit(k);
  }
}

Mat3 quat_to_matrix(const Quat4& q) {
  const Eigen::Quaterniond e(q[0], q[1], q[2], q[3]);
  return e.normalized().toRotationMatrix();
}

Quat4 matrix_to_quat(const Mat3& r) {
  Eigen::Quaterniond e(r);
  e.normalize();
  if (e.w() < 0.0) {
    e.coeffs() *= -1.0;
  }
  return {e.w(), e.x(), e.y(), e.z()};
}

Quat4 quat_multiply(const Quat4& a, const Quat4& b) {
  const Eigen::Quaterniond qa(a[0], a[1], a[2], a[3]);
  const Eigen::Quaterniond qb(b[0], b[1], b[2], b[3]);
  const Eigen::Quaterniond p = qa * qb;
  return {p.w(), p.x(), p.y(), p.z()};
}

Quat4 quat_matrix_vjp(const Quat4& q, const Mat3& G) {
  const double n = q.norm();
  const Quat4 u = q / n;
  const double w = u[0], x = u[1], y = u[2], z = u[3];

  Mat3 dw, dx, dy, dz;
  // clang-format off
  dw <<      0, -2 * z,  2 * y,
         2 * z,      0, -2 * x,
        -2 * y,  2 * x,      0;
  dx <<      0,  2 * y,  2 * z,
         2 * y, -4 * x, -2 * w,
         2 * z,  2 * w, -4 * x;
  dy << -4 * y,  2 * x,  2 * w,
         2 * x,      0,  2 * z,
        -2 * w,  2 * z, -4 * y;
  dz << -4 * z, -2 * w,  2 * x,
         2 * w, -4 * z,  2 * y,
         2 * x,  2 * y,      0;
  // clang-format on
  const Quat4 gu(G.cwiseProduct(dw).sum(), G.cwiseProduct(dx).sum(), G.cwiseProduct(dy).sum(),
                 G.cwiseProduct(dz).sum());
  return (gu - u * u.dot(gu)) / n;
}

Vec6 se3_exp_vjp(const Twist& xi, const RigidTransform& T, const Mat3& dL_dR, const Vec3& dL_dt) {
  // Gradient w.r.t. a left perturbation eta of T, then pulled through the
  // left Jacobian: exp(xi + d) = exp(J d) T.
  const Mat3 M = dL_dR * T.rotation.transpose();
  Vec3 g_rot(M(2, 1) - M(1, 2), M(0, 2) - M(2, 0), M(1, 0) - M(0, 1));
  g_rot += T.translation.cross(dL_dt);
  const Vec3& g_trans = dL_dt;

  const Mat3 Jl = so3_left_jacobian(xi.omega);
  const Mat3 Q = se3_left_jacobian_q(xi.v, xi.omega);
  Vec6 out;
  out.head<3>() = Jl.transpose() * g_rot + Q.transpose() * g_trans;
  out.tail<3>() = Jl.transpose() * g_trans;
  return out;
}

}  // namespace msplat
