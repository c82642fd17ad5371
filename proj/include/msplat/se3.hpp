// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Lie-group kernel for rigid motion.
//
// Tangent layout (used in every file format of this project):
//   xi = (omega_x, omega_y, omega_z, v_x, v_y, v_z)
// i.e. rotation first, translation second. The 4x4 algebra element is
//   [ omega^  v ]
//   [   0     0 ]
//
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstddef>

namespace msplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// se(3) element.
struct Twist {
  Vec3 omega = Vec3::Zero();
  Vec3 v = Vec3::Zero();

  [[nodiscard]] Vec6 vector() const {
    Vec6 out;
    out << omega, v;
    return out;
  }
  static Twist from_vector(const Vec6& xi) { return {xi.head<3>(), xi.tail<3>()}; }

  /// 4x4 matrix embedding of the algebra element.
  [[nodiscard]] Mat4 matrix() const;
};

/// SE(3) element, stored as a rotation matrix and a translation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  [[nodiscard]] Mat4 matrix() const;
  [[nodiscard]] Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
  [[nodiscard]] RigidTransform inverse() const;
};

[[nodiscard]] Mat3 skew(const Vec3& w);
[[nodiscard]] Vec3 vee(const Mat3& m);

/// Rodrigues formula. Second-order series below 1e-8 rad.
[[nodiscard]] Mat3 so3_exp(const Vec3& omega);
/// Left Jacobian of SO(3); also the V matrix of the SE(3) exponential.
[[nodiscard]] Mat3 so3_left_jacobian(const Vec3& omega);
/// Off-diagonal block Q(v, omega) of the SE(3) left Jacobian.
[[nodiscard]] Mat3 se3_left_jacobian_q(const Vec3& v, const Vec3& omega);

/// Full 6x6 left Jacobian in (omega, v) ordering:
///   exp(xi + d) ~= exp(J d) * exp(xi).
[[nodiscard]] Eigen::Matrix<double, 6, 6> se3_left_jacobian(const Twist& xi);

/// Throws InvalidArgument on non-finite input.
[[nodiscard]] RigidTransform se3_exp(const Twist& xi);

/// Principal-branch logarithm. Throws InvalidArgument when the rotation angle is
/// within 1e-6 of pi (the axis is ambiguous there).
[[nodiscard]] Twist se3_log(const RigidTransform& T);

/// a * b.
[[nodiscard]] RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

/// Nearest rotation (polar decomposition via SVD).
[[nodiscard]] Mat3 orthonormalize(const Mat3& r);

/// max(|R^T R - I|) and |det R - 1|, whichever is larger.
[[nodiscard]] double orthonormality_error(const Mat3& r);

/// Running product of transforms that re-projects the rotation onto SO(3)
/// every `period` compositions.
class TransformChain {
 public:
  explicit TransformChain(std::size_t period = 1000) : period_(period) {}
  void push(const RigidTransform& t);
  [[nodiscard]] const RigidTransform& value() const { return value_; }
  [[nodiscard]] std::size_t count() const { return count_; }

 private:
  RigidTransform value_;
  std::size_t period_;
  std::size_t count_ = 0;
};

/// The six frozen generators: unit translations along X/Y/Z followed by
/// unit rotations about X/Y/Z.
class FixedGeneratorSet {
 public:
  static constexpr std::size_t kSize = 6;

  FixedGeneratorSet();
  [[nodiscard]] const Twist& operator[](std::size_t k) const { return generators_[k]; }
  [[nodiscard]] const std::array<Twist, kSize>& generators() const { return generators_; }
  [[nodiscard]] std::size_t size() const { return kSize; }

 private:
  std::array<Twist, kSize> generators_;
};

// Quaternions appear only at I/O and parameter boundaries. Layout (w, x, y, z).
using Quat4 = Eigen::Vector4d;

[[nodiscard]] Mat3 quat_to_matrix(const Quat4& q);
[[nodiscard]] Quat4 matrix_to_quat(const Mat3& r);
[[nodiscard]] Quat4 quat_multiply(const Quat4& a, const Quat4& b);

/// Rotation of the normalized quaternion q/|q| and the gradient pull-back
/// from dL/dR to dL/dq (q need not be unit length).
[[nodiscard]] Quat4 quat_matrix_vjp(const Quat4& q, const Mat3& dL_dR);

/// Gradient of L w.r.t. a twist xi, given dL/dR and dL/dt of T = exp(xi).
[[nodiscard]] Vec6 se3_exp_vjp(const Twist& xi, const RigidTransform& T, const Mat3& dL_dR,
                               const Vec3& dL_dt);

}  // namespace msplat
