/**
 * \file liegroup.hpp
 * \brief Minimal SE(3)/SO(3) toolbox.
 *
 * Twists are ordered (rho; phi): translational part first, rotational part
 * second, so that
 *
 *   xi^ = | phi^  rho |
 *         |  0^T   0  |
 *
 * Every perturbation in the library is a LEFT perturbation,
 * T = exp(dxi^) * T_op.
 */
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace semloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// 6-vector (rho; phi) in se(3).
using Twist = Vec6;

/// Below this rotation angle exp/log switch to Taylor series.
inline constexpr double kSmallAngle = 1e-8;

/**
 * \brief Rigid transform in SE(3) stored as a 4x4 homogeneous matrix.
 *
 * The bottom row is exactly (0,0,0,1). Composition re-projects the rotation
 * block onto SO(3) whenever its orthogonality residual exceeds 1e-7, so long
 * compose chains stay valid.
 */
class Pose {
 public:
  Pose() : m_(Mat4::Identity()) {}
  Pose(const Mat3& rotation, const Vec3& translation);

  /// Builds a pose from a homogeneous matrix; throws ValidationError if the
  /// rotation block is not in SO(3) within 1e-9 or the bottom row is wrong.
  static Pose FromMatrix(const Mat4& m);
  static Pose Translation(const Vec3& t) { return Pose(Mat3::Identity(), t); }
  static Pose Identity() { return Pose(); }

  const Mat4& matrix() const { return m_; }
  Mat3 rotation() const { return m_.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return m_.topRightCorner<3, 1>(); }

  Pose inverse() const;
  Pose operator*(const Pose& rhs) const;
  Vec3 operator*(const Vec3& p) const;

 private:
  Mat4 m_;
};

Mat3 so3_wedge(const Vec3& phi);
Vec3 so3_vee(const Mat3& m);
Mat4 se3_wedge(const Twist& xi);
Twist se3_vee(const Mat4& m);

Mat3 so3_exp(const Vec3& phi);
/// Rotation vector of r; throws NearPiRotation within 1e-6 of pi.
Vec3 so3_log(const Mat3& r);
Mat3 so3_left_jacobian(const Vec3& phi);
Mat3 so3_left_jacobian_inverse(const Vec3& phi);

Pose exp_se3(const Twist& xi);
Twist log_se3(const Pose& pose);

/// Adjoint of T, Ad(T) = [C, t^C; 0, C] in (rho; phi) ordering.
Mat6 adjoint(const Pose& pose);

/// Left Jacobian of SE(3): exp((xi + d)^) ~ exp((J d)^) exp(xi^).
Mat6 se3_left_jacobian(const Twist& xi);
Mat6 se3_left_jacobian_inverse(const Twist& xi);

inline Pose compose(const Pose& a, const Pose& b) { return a * b; }
inline Pose inverse(const Pose& a) { return a.inverse(); }
inline Vec3 act(const Pose& a, const Vec3& p) { return a * p; }

/// Polar projection of a 3x3 matrix onto SO(3).
Mat3 project_to_so3(const Mat3& m);

inline Vec3 twist_rho(const Twist& xi) { return xi.head<3>(); }
inline Vec3 twist_phi(const Twist& xi) { return xi.tail<3>(); }
inline Twist make_twist(const Vec3& rho, const Vec3& phi) {
  Twist xi;
  xi << rho, phi;
  return xi;
}

}  // namespace semloc
