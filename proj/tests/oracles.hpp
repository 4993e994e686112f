/**
 * \file oracles.hpp
 * \brief Reference implementations used only by the tests.
 *
 * Nothing here calls the library's exp/log or Jacobian code: matrix functions
 * come from Eigen's unsupported MatrixFunctions module and derivatives from
 * central differences.
 */
#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "semloc/estimator.hpp"
#include "semloc/geometry.hpp"
#include "semloc/liegroup.hpp"
#include "semloc/semantic_map.hpp"

namespace oracle {

using semloc::Mat3;
using semloc::Mat4;
using semloc::Mat6;
using semloc::MatX;
using semloc::Pose;
using semloc::Twist;
using semloc::Vec2;
using semloc::Vec3;
using semloc::Vec6;
using semloc::VecX;

inline Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v(2), v(1), v(2), 0.0, -v(0), -v(1), v(0), 0.0;
  return m;
}

inline Mat4 hat6(const Twist& xi) {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = hat(xi.tail<3>());
  m.topRightCorner<3, 1>() = xi.head<3>();
  return m;
}

/// Truncated power series sum_{n < terms} X^n / n!.
inline Mat4 series_exp(const Mat4& x, int terms = 30) {
  Mat4 sum = Mat4::Identity();
  Mat4 term = Mat4::Identity();
  for (int n = 1; n < terms; ++n) {
    term = term * x / static_cast<double>(n);
    sum += term;
  }
  return sum;
}

inline Mat4 expm(const Twist& xi) { return hat6(xi).exp(); }

inline Twist logm(const Mat4& t) {
  const Mat4 l = t.log();
  Twist xi;
  xi << l(0, 3), l(1, 3), l(2, 3), l(2, 1), l(0, 2), l(1, 0);
  return xi;
}

inline Pose to_pose(const Mat4& m) {
  // Re-project to SO(3) so that accumulated round-off never trips validation.
  Eigen::JacobiSVD<Mat3> svd(m.topLeftCorner<3, 3>(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  return Pose(r, m.topRightCorner<3, 1>());
}

/// Central-difference Jacobian of f: R^n -> R^m at x.
inline MatX numeric_jacobian(const std::function<VecX(const VecX&)>& f, const VecX& x,
                             double h = 1e-6) {
  const VecX f0 = f(x);
  MatX j(f0.size(), x.size());
  for (int i = 0; i < x.size(); ++i) {
    VecX xp = x;
    VecX xm = x;
    xp(i) += h;
    xm(i) -= h;
    j.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return j;
}

inline double relative_error(const MatX& analytic, const MatX& numeric) {
  const double scale = std::max(numeric.norm(), 1e-12);
  return (analytic - numeric).norm() / scale;
}

inline Twist random_twist(std::mt19937_64& rng, double rho_scale, double max_angle) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec3 axis(u(rng), u(rng), u(rng));
  while (axis.norm() < 1e-3) axis = Vec3(u(rng), u(rng), u(rng));
  std::uniform_real_distribution<double> ang(0.0, max_angle);
  Twist xi;
  xi << rho_scale * Vec3(u(rng), u(rng), u(rng)), axis.normalized() * ang(rng);
  return xi;
}

inline Pose random_pose(std::mt19937_64& rng, double rho_scale = 5.0, double max_angle = 3.0) {
  return to_pose(expm(random_twist(rng, rho_scale, max_angle)));
}

/// Vehicle-from-map pose of a vehicle at (x, y, z) with yaw, roll and pitch.
inline Pose vehicle_pose(double x, double y, double z, double yaw, double roll = 0.0,
                         double pitch = 0.0) {
  const Mat3 c_mv = (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
                     Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                     Eigen::AngleAxisd(roll, Vec3::UnitX()))
                        .toRotationMatrix();
  const Vec3 r(x, y, z);
  return Pose(c_mv.transpose(), -c_mv.transpose() * r);
}

/// Plain pinhole arithmetic: K (T_cv T_vm p)/z.
inline Vec2 pinhole(const Vec3& p_m, const Mat4& t_vm, const semloc::CameraModel& cam) {
  const Vec3 pc = (cam.t_cv.matrix() * t_vm * p_m.homogeneous()).head<3>();
  return Vec2(cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy);
}

/// Column of the line through pixels a and b at row y.
inline double column_at_row(const Vec2& a, const Vec2& b, double y) {
  return a.x() + (y - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
}

/// Single-step problem solved by brute force on the robust stacked cost.
struct StepProblem {
  semloc::EstimatorState pred;
  semloc::MeasurementBundle bundle;
  semloc::SemanticMap map;
  semloc::CameraModel cam;
  semloc::NoiseConfig noise;
  bool robust = true;
  bool pseudo = true;
};

struct OracleState {
  Mat4 t_vm;
  Twist varpi;
  Mat4 t_gm;
};

inline OracleState oracle_state(const StepProblem& p, const VecX& d) {
  OracleState s;
  s.t_vm = expm(d.segment<6>(0)) * p.pred.t_vm.matrix();
  s.varpi = p.pred.varpi + d.segment<6>(6);
  s.t_gm = expm(d.segment<6>(12)) * p.pred.t_gm.matrix();
  return s;
}

/// Residual blocks of the cost at perturbation d (left perturbations about the prediction).
struct Residuals {
  VecX prior;
  std::vector<VecX> plain;
  std::vector<MatX> plain_info;
  std::vector<VecX> robust;
  std::vector<MatX> robust_info;
};

inline Residuals residuals(const StepProblem& p, const VecX& d) {
  const OracleState s = oracle_state(p, d);
  Residuals r;
  r.prior = VecX(18);
  r.prior << logm(s.t_vm * p.pred.t_vm.matrix().inverse()), s.varpi - p.pred.varpi,
      logm(s.t_gm * p.pred.t_gm.matrix().inverse());

  const auto& b = p.bundle;
  if (b.gps) {
    r.plain.push_back(logm(b.gps->matrix() * s.t_gm * s.t_vm.inverse()));
    r.plain_info.push_back(p.noise.r_vg.inverse());
  }
  auto& sem = p.robust ? r.robust : r.plain;
  auto& sem_info = p.robust ? r.robust_info : r.plain_info;
  for (const auto& m : b.light_matches) {
    sem.push_back(m.detection - pinhole(p.map.light(m.light_id).position, s.t_vm, p.cam));
    sem_info.push_back(p.noise.r_light.inverse());
  }
  for (const auto& obs : b.lane_matches) {
    const auto& lane = p.map.lane(obs.match.lane_id);
    const Vec2 pa = pinhole(lane.vertices[obs.match.segment_index], s.t_vm, p.cam);
    const Vec2 pb = pinhole(lane.vertices[obs.match.segment_index + 1], s.t_vm, p.cam);
    const Vec2 fa = obs.match.fitted.a;
    const Vec2 fb = obs.match.fitted.b;
    Vec2 e;
    for (int j = 0; j < 2; ++j) {
      const double y = obs.y_rows(j);
      e(j) = column_at_row(fa, fb, y) - column_at_row(pa, pb, y);
    }
    sem.push_back(e);
    sem_info.push_back(p.noise.r_lane.inverse());
  }
  if (b.wheel) {
    r.plain.push_back(Vec2(b.wheel->v + s.varpi(0), b.wheel->omega + s.varpi(5)));
    r.plain_info.push_back(p.noise.r_wheel.inverse());
  }
  if (p.pseudo) {
    const Mat3 c_mv = s.t_vm.topLeftCorner<3, 3>().transpose();
    const Vec3 pos = -c_mv * s.t_vm.topRightCorner<3, 1>();
    VecX e(4);
    e << pos.z(), std::atan2(c_mv(2, 1), c_mv(2, 2)), -std::asin(c_mv(2, 0)), s.varpi(1);
    r.plain.push_back(e);
    r.plain_info.push_back(p.noise.r_pseudo.cwiseInverse().asDiagonal());
  }
  return r;
}

/// J = 1/2 e_v^T P^-1 e_v + 1/2 sum e^T R^-1 e + 1/2 sum ln(1 + e^T R^-1 e) (robust terms).
inline double robust_cost(const StepProblem& p, const MatX& prior_info, const VecX& d) {
  const Residuals r = residuals(p, d);
  double j = 0.5 * r.prior.dot(prior_info * r.prior);
  for (std::size_t i = 0; i < r.plain.size(); ++i) j += 0.5 * r.plain[i].dot(r.plain_info[i] * r.plain[i]);
  for (std::size_t i = 0; i < r.robust.size(); ++i) {
    j += 0.5 * std::log1p(r.robust[i].dot(r.robust_info[i] * r.robust[i]));
  }
  return j;
}

/// Flattens all residual blocks into one vector (fixed ordering).
inline VecX stacked(const Residuals& r) {
  std::vector<const VecX*> parts{&r.prior};
  for (const auto& e : r.plain) parts.push_back(&e);
  for (const auto& e : r.robust) parts.push_back(&e);
  int n = 0;
  for (const auto* e : parts) n += static_cast<int>(e->size());
  VecX out(n);
  int k = 0;
  for (const auto* e : parts) {
    out.segment(k, e->size()) = *e;
    k += static_cast<int>(e->size());
  }
  return out;
}

/// Dense IRLS Gauss-Newton on the stacked cost with numeric Jacobians.
/// Returns the minimizing perturbation about the prediction.
inline VecX solve_step(const StepProblem& p, int max_iters = 200, double tol = 1e-13) {
  const MatX prior_info = p.pred.cov.inverse();
  VecX d = VecX::Zero(18);
  const std::function<VecX(const VecX&)> f = [&p](const VecX& x) { return stacked(residuals(p, x)); };
  for (int it = 0; it < max_iters; ++it) {
    const Residuals r = residuals(p, d);
    const VecX e = stacked(r);
    const MatX j = numeric_jacobian(f, d, 1e-7);
    // Block-diagonal weight: prior, plain, then Cauchy-weighted robust blocks.
    MatX w = MatX::Zero(e.size(), e.size());
    int k = 0;
    w.block(0, 0, 18, 18) = prior_info;
    k = 18;
    for (std::size_t i = 0; i < r.plain.size(); ++i) {
      const int n = static_cast<int>(r.plain[i].size());
      w.block(k, k, n, n) = r.plain_info[i];
      k += n;
    }
    for (std::size_t i = 0; i < r.robust.size(); ++i) {
      const int n = static_cast<int>(r.robust[i].size());
      const double s = r.robust[i].dot(r.robust_info[i] * r.robust[i]);
      w.block(k, k, n, n) = r.robust_info[i] / (1.0 + s);
      k += n;
    }
    const MatX a = j.transpose() * w * j;
    const VecX g = j.transpose() * w * e;
    VecX step = a.fullPivLu().solve(-g);
    const double c0 = robust_cost(p, prior_info, d);
    double scale = 1.0;
    while (scale > 1e-6 && robust_cost(p, prior_info, d + scale * step) > c0 + 1e-15) scale *= 0.5;
    d += scale * step;
    if ((scale * step).norm() < tol) break;
  }
  return d;
}

/// Random single-step problem around a flat-ground vehicle.
inline StepProblem make_step_problem(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);
  StepProblem p;
  p.cam = semloc::default_camera();
  p.noise = semloc::NoiseConfig::Defaults();
  p.robust = u01(rng) < 0.7;
  p.pseudo = u01(rng) < 0.8;

  const Pose t_vm_true = vehicle_pose(50.0 * u(rng), 50.0 * u(rng), 0.05 * u(rng), M_PI * u(rng),
                                      0.02 * u(rng), 0.02 * u(rng));
  Twist d_vm;
  d_vm << 0.3 * u(rng), 0.3 * u(rng), 0.05 * u(rng), 0.01 * u(rng), 0.01 * u(rng), 0.02 * u(rng);
  Pose t_gm_true = to_pose(expm(Twist((Twist() << 3.0 * u(rng), 3.0 * u(rng), 0.2 * u(rng),
                                       0.0, 0.0, 0.02 * u(rng)).finished())));
  Twist d_gm;
  d_gm << 0.5 * u(rng), 0.5 * u(rng), 0.05 * u(rng), 0.005 * u(rng), 0.005 * u(rng),
      0.01 * u(rng);
  const double v = 5.0 + 5.0 * u01(rng);
  const double w = 0.3 * u(rng);

  p.pred.t_vm = to_pose(expm(d_vm) * t_vm_true.matrix());
  p.pred.t_gm = to_pose(expm(d_gm) * t_gm_true.matrix());
  p.pred.varpi << -v + 0.3 * u(rng), 0.1 * u(rng), 0.05 * u(rng), 0.01 * u(rng), 0.01 * u(rng),
      -w + 0.05 * u(rng);
  MatX l = MatX::Identity(18, 18);
  for (int i = 0; i < 18; ++i) {
    for (int j = 0; j < i; ++j) l(i, j) = 0.1 * u(rng);
  }
  semloc::Vec18 sd;
  sd << Vec3::Constant(0.5), Vec3::Constant(0.02), Vec3::Constant(0.5), Vec3::Constant(0.05),
      Vec3::Constant(1.0), Vec3::Constant(0.01);
  const MatX ls = sd.asDiagonal() * l;
  p.pred.cov = ls * ls.transpose();

  const Pose t_mv_true = t_vm_true.inverse();
  std::vector<semloc::TrafficLight> lights;
  std::vector<semloc::LaneBoundary> lanes;
  const int n_lights = static_cast<int>(std::floor(4.0 * u01(rng)));
  for (int i = 0; i < n_lights; ++i) {
    const Vec3 p_v(15.0 + 25.0 * u01(rng), 6.0 * u(rng), 3.0 + 3.0 * u01(rng));
    lights.push_back({10 + i, t_mv_true * p_v});
    semloc::LightMatch m;
    m.light_id = 10 + i;
    m.detection = pinhole(lights.back().position, t_vm_true.matrix(), p.cam) +
                  Vec2(2.0 * n01(rng), 2.0 * n01(rng));
    if (u01(rng) < 0.15) m.detection += Vec2(25.0, -15.0);
    p.bundle.light_matches.push_back(m);
  }
  const int n_lanes = static_cast<int>(std::floor(3.0 * u01(rng)));
  const double offsets[4] = {-5.25, -1.75, 1.75, 5.25};
  for (int i = 0; i < n_lanes; ++i) {
    const double y0 = offsets[(i * 2 + (u01(rng) < 0.5 ? 0 : 1)) % 4];
    const Vec3 a = t_mv_true * Vec3(6.0, y0, 0.0);
    const Vec3 b = t_mv_true * Vec3(30.0, y0, 0.0);
    lanes.push_back({20 + i, {a, b}});
    semloc::LaneObservation obs;
    obs.match.lane_id = 20 + i;
    obs.match.segment_index = 0;
    obs.match.support = 50;
    const Vec2 pa = pinhole(a, t_vm_true.matrix(), p.cam) + Vec2(n01(rng), 0.0);
    const Vec2 pb = pinhole(b, t_vm_true.matrix(), p.cam) + Vec2(n01(rng), 0.0);
    obs.match.fitted = semloc::ImageLine(pa, pb);
    obs.y_rows = Vec2(0.6 * p.cam.height, 0.9 * p.cam.height);
    p.bundle.lane_matches.push_back(obs);
  }
  p.map = semloc::SemanticMap(lanes, lights);

  if (u01(rng) < 0.7) {
    Twist n;
    n << 0.1 * n01(rng), 0.1 * n01(rng), 0.1 * n01(rng), 0.005 * n01(rng), 0.005 * n01(rng),
        0.005 * n01(rng);
    p.bundle.gps = to_pose(expm(n) * t_vm_true.matrix() * t_gm_true.matrix().inverse());
  }
  if (u01(rng) < 0.7) {
    p.bundle.wheel = semloc::WheelMeasurement{v + 0.05 * n01(rng), w + 0.005 * n01(rng)};
  }
  return p;
}

/// Distance between two estimator states (pose logs and velocity difference).
inline double state_distance(const semloc::EstimatorState& a, const OracleState& b) {
  VecX d(18);
  d << logm(a.t_vm.matrix() * b.t_vm.inverse()), a.varpi - b.varpi,
      logm(a.t_gm.matrix() * b.t_gm.inverse());
  return d.cwiseAbs().maxCoeff();
}

// Left-perturbation difference a - b of two states.
inline VecX state_minus(const semloc::EstimatorState& a, const semloc::EstimatorState& b) {
  VecX d(18);
  d << logm(a.t_vm.matrix() * b.t_vm.matrix().inverse()), a.varpi - b.varpi,
      logm(a.t_gm.matrix() * b.t_gm.matrix().inverse());
  return d;
}

inline semloc::EstimatorState perturbed(const semloc::EstimatorState& s, const VecX& d) {
  semloc::EstimatorState out = s;
  out.t_vm = to_pose(expm(d.segment<6>(0)) * s.t_vm.matrix());
  out.varpi = s.varpi + d.segment<6>(6);
  out.t_gm = to_pose(expm(d.segment<6>(12)) * s.t_gm.matrix());
  return out;
}

inline semloc::EstimatorState random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  semloc::EstimatorState s;
  s.t_vm = random_pose(rng, 50.0, 3.0);
  s.t_gm = random_pose(rng, 3.0, 0.5);
  s.varpi << 10 * u(rng), u(rng), u(rng), 0.3 * u(rng), 0.3 * u(rng), 0.5 * u(rng);
  s.cov = semloc::default_initial_covariance();
  return s;
}

}  // namespace oracle
