#include "semloc/liegroup.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "semloc/errors.hpp"

namespace semloc {

namespace {

constexpr double kOrthoReproject = 1e-7;
constexpr double kOrthoValid = 1e-9;
constexpr double kNearPi = 1e-6;
// Coefficients with catastrophic cancellation use Taylor series below this
// angle regardless of kSmallAngle.
constexpr double kSeriesCoeff = 1e-3;

double ortho_residual(const Mat3& r) {
  return (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
}

// (1 - cos t) / t^2
double coeff_b(double t) {
  if (t < kSeriesCoeff) {
    const double t2 = t * t;
    return 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
  }
  return (1.0 - std::cos(t)) / (t * t);
}

// (t - sin t) / t^3
double coeff_c(double t) {
  if (t < kSeriesCoeff) {
    const double t2 = t * t;
    return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  }
  return (t - std::sin(t)) / (t * t * t);
}

// (t^2 + 2 cos t - 2) / (2 t^4)
double coeff_d(double t) {
  if (t < kSeriesCoeff) {
    const double t2 = t * t;
    return 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0;
  }
  const double t2 = t * t;
  return (t2 + 2.0 * std::cos(t) - 2.0) / (2.0 * t2 * t2);
}

// (2 t - 3 sin t + t cos t) / (2 t^5)
double coeff_e(double t) {
  if (t < kSeriesCoeff) {
    const double t2 = t * t;
    return 1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120960.0;
  }
  const double t2 = t * t;
  return (2.0 * t - 3.0 * std::sin(t) + t * std::cos(t)) / (2.0 * t2 * t2 * t);
}

// 1/t^2 - (1 + cos t) / (2 t sin t)
double coeff_jinv(double t) {
  if (t < kSeriesCoeff) {
    const double t2 = t * t;
    return 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  }
  return 1.0 / (t * t) - (1.0 + std::cos(t)) / (2.0 * t * std::sin(t));
}

// Q block of the SE(3) left Jacobian.
Mat3 se3_q(const Vec3& rho, const Vec3& phi) {
  const double t = phi.norm();
  const Mat3 rx = so3_wedge(rho);
  const Mat3 px = so3_wedge(phi);
  const Mat3 pxrx = px * rx;
  const Mat3 rxpx = rx * px;
  const Mat3 pxrxpx = pxrx * px;
  const Mat3 pxpx = px * px;
  return 0.5 * rx + coeff_c(t) * (pxrx + rxpx + pxrxpx) +
         coeff_d(t) * (pxpx * rx + rxpx * px - 3.0 * pxrxpx) +
         coeff_e(t) * (pxrxpx * px + pxpx * rx * px);
}

}  // namespace

Mat3 project_to_so3(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
    d(2, 2) = -1.0;
  }
  return svd.matrixU() * d * svd.matrixV().transpose();
}

Pose::Pose(const Mat3& rotation, const Vec3& translation) : m_(Mat4::Identity()) {
  m_.topLeftCorner<3, 3>() = rotation;
  m_.topRightCorner<3, 1>() = translation;
}

Pose Pose::FromMatrix(const Mat4& m) {
  if (!m.allFinite()) throw ValidationError("pose matrix has non-finite entries");
  if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0) {
    throw ValidationError("pose bottom row must be (0,0,0,1)");
  }
  const Mat3 r = m.topLeftCorner<3, 3>();
  if (ortho_residual(r) > kOrthoValid || std::abs(r.determinant() - 1.0) > kOrthoValid) {
    throw ValidationError("pose rotation block is not in SO(3)");
  }
  return Pose(r, m.topRightCorner<3, 1>());
}

Pose Pose::inverse() const {
  const Mat3 rt = rotation().transpose();
  return Pose(rt, -rt * translation());
}

Pose Pose::operator*(const Pose& rhs) const {
  Mat3 r = rotation() * rhs.rotation();
  const Vec3 t = rotation() * rhs.translation() + translation();
  if (ortho_residual(r) > kOrthoReproject) r = project_to_so3(r);
  return Pose(r, t);
}

Vec3 Pose::operator*(const Vec3& p) const { return rotation() * p + translation(); }

Mat3 so3_wedge(const Vec3& phi) {
  Mat3 m;
  m << 0.0, -phi(2), phi(1),
       phi(2), 0.0, -phi(0),
       -phi(1), phi(0), 0.0;
  return m;
}

Vec3 so3_vee(const Mat3& m) { return Vec3(m(2, 1), m(0, 2), m(1, 0)); }

Mat4 se3_wedge(const Twist& xi) {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = so3_wedge(twist_phi(xi));
  m.topRightCorner<3, 1>() = twist_rho(xi);
  return m;
}

Twist se3_vee(const Mat4& m) {
  return make_twist(m.topRightCorner<3, 1>(), so3_vee(m.topLeftCorner<3, 3>()));
}

Mat3 so3_exp(const Vec3& phi) {
  const double t = phi.norm();
  const Mat3 px = so3_wedge(phi);
  if (t < kSmallAngle) {
    return Mat3::Identity() + px + 0.5 * px * px + (1.0 / 6.0) * px * px * px;
  }
  return Mat3::Identity() + (std::sin(t) / t) * px + coeff_b(t) * px * px;
}

Vec3 so3_log(const Mat3& r) {
  const Vec3 w = 0.5 * so3_vee(r - r.transpose());  // sin(t) * axis
  const double s = w.norm();
  const double c = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  const double t = std::atan2(s, c);
  if (t < kSmallAngle) {
    // r ~ I + phi^ + phi^2/2, skew part is phi (1 - t^2/6)
    return w * (1.0 + s * s / 6.0);
  }
  if (std::numbers::pi - t < kNearPi) {
    throw NearPiRotation("rotation angle within 1e-6 of pi");
  }
  if (t < 2.5) return w * (t / s);
  // Close to pi the skew part is tiny; recover the axis from the symmetric part
  // (1 - cos t) a a^T = (r + r^T)/2 - cos t I and fix its sign with w.
  const Mat3 b = 0.5 * (r + r.transpose()) - c * Mat3::Identity();
  Eigen::Index k = 0;
  b.diagonal().maxCoeff(&k);
  Vec3 axis = b.col(k) / std::sqrt(b(k, k) * (1.0 - c));
  axis.normalize();
  if (axis.dot(w) < 0.0) axis = -axis;
  return axis * t;
}

Mat3 so3_left_jacobian(const Vec3& phi) {
  const double t = phi.norm();
  const Mat3 px = so3_wedge(phi);
  return Mat3::Identity() + coeff_b(t) * px + coeff_c(t) * px * px;
}

Mat3 so3_left_jacobian_inverse(const Vec3& phi) {
  const double t = phi.norm();
  const Mat3 px = so3_wedge(phi);
  return Mat3::Identity() - 0.5 * px + coeff_jinv(t) * px * px;
}

Pose exp_se3(const Twist& xi) {
  const Vec3 rho = twist_rho(xi);
  const Vec3 phi = twist_phi(xi);
  const double t = phi.norm();
  if (t < kSmallAngle) {
    const Mat3 px = so3_wedge(phi);
    const Mat3 px2 = px * px;
    const Mat3 r = Mat3::Identity() + px + 0.5 * px2 + (1.0 / 6.0) * px2 * px;
    const Mat3 j = Mat3::Identity() + 0.5 * px + (1.0 / 6.0) * px2 + (1.0 / 24.0) * px2 * px;
    return Pose(r, j * rho);
  }
  return Pose(so3_exp(phi), so3_left_jacobian(phi) * rho);
}

Twist log_se3(const Pose& pose) {
  const Vec3 phi = so3_log(pose.rotation());
  const double t = phi.norm();
  Mat3 jinv;
  if (t < kSmallAngle) {
    const Mat3 px = so3_wedge(phi);
    jinv = Mat3::Identity() - 0.5 * px + (1.0 / 12.0) * px * px;
  } else {
    jinv = so3_left_jacobian_inverse(phi);
  }
  return make_twist(jinv * pose.translation(), phi);
}

Mat6 adjoint(const Pose& pose) {
  const Mat3 c = pose.rotation();
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = c;
  ad.topRightCorner<3, 3>() = so3_wedge(pose.translation()) * c;
  ad.bottomRightCorner<3, 3>() = c;
  return ad;
}

Mat6 se3_left_jacobian(const Twist& xi) {
  const Mat3 j = so3_left_jacobian(twist_phi(xi));
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = j;
  out.bottomRightCorner<3, 3>() = j;
  out.topRightCorner<3, 3>() = se3_q(twist_rho(xi), twist_phi(xi));
  return out;
}

Mat6 se3_left_jacobian_inverse(const Twist& xi) {
  const Mat3 jinv = so3_left_jacobian_inverse(twist_phi(xi));
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = jinv;
  out.bottomRightCorner<3, 3>() = jinv;
  out.topRightCorner<3, 3>() = -jinv * se3_q(twist_rho(xi), twist_phi(xi)) * jinv;
  return out;
}

}  // namespace semloc
