#include "semloc/estimator.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "semloc/errors.hpp"

namespace semloc {

namespace {

bool is_spd(const MatX& m) {
  if (!m.isApprox(m.transpose(), 1e-9)) return false;
  Eigen::LLT<MatX> llt(m);
  return llt.info() == Eigen::Success;
}

double frozen_cost(const Vec18& prior_e, const Mat18& prior_info,
                   const std::vector<MeasurementTerm>& terms, const std::vector<MatX>& weights,
                   const std::vector<VecX>& errors) {
  double cost = 0.5 * prior_e.dot(prior_info * prior_e);
  for (std::size_t i = 0; i < terms.size(); ++i) {
    cost += 0.5 * errors[i].dot(weights[i] * errors[i]);
  }
  return cost;
}

// Re-evaluates the error of an already linearized term at a new state.
VecX evaluate_term(const MeasurementTerm& term, std::size_t source, const EstimatorState& x,
                   const MeasurementBundle& bundle, const SemanticMap& map,
                   const CameraModel& cam) {
  switch (term.kind) {
    case TermKind::kGps:
      return gps_error(*bundle.gps, x.t_vm, x.t_gm);
    case TermKind::kLight:
      return light_error(bundle.light_matches[source], x.t_vm, map, cam);
    case TermKind::kLane: {
      const auto& obs = bundle.lane_matches[source];
      return lane_error(obs.match, obs.y_rows, x.t_vm, map, cam);
    }
    case TermKind::kWheel:
      return wheel_error(*bundle.wheel, x.varpi);
    case TermKind::kPseudo:
      return pseudo_errors(x.t_vm, x.varpi);
  }
  return {};
}

// Same as linearize_measurements but also records the bundle index of every term.
std::vector<MeasurementTerm> linearize_indexed(const EstimatorState& op,
                                               const MeasurementBundle& bundle,
                                               const SemanticMap& map, const CameraModel& cam,
                                               const NoiseConfig& noise,
                                               const CorrectionOptions& opts,
                                               std::vector<std::size_t>* sources) {
  std::vector<MeasurementTerm> terms;
  const auto push = [&](MeasurementTerm t, std::size_t src) {
    terms.push_back(std::move(t));
    if (sources != nullptr) sources->push_back(src);
  };

  if (bundle.gps) {
    Mat6 jvm;
    Mat6 jgm;
    MeasurementTerm t;
    t.kind = TermKind::kGps;
    t.error = gps_error(*bundle.gps, op.t_vm, op.t_gm, &jvm, &jgm);
    t.jac = MatX::Zero(6, kStateDim);
    t.jac.block<6, 6>(0, 0) = jvm;
    t.jac.block<6, 6>(0, 12) = jgm;
    t.r_inv = noise.r_vg.inverse();
    push(std::move(t), 0);
  }

  const MatX light_info = noise.r_light.inverse();
  for (std::size_t i = 0; i < bundle.light_matches.size(); ++i) {
    Mat26 j;
    MeasurementTerm t;
    t.kind = TermKind::kLight;
    try {
      t.error = light_error(bundle.light_matches[i], op.t_vm, map, cam, &j);
    } catch (const BehindCamera&) {
      continue;  // not observable from this operating point
    }
    t.jac = MatX::Zero(2, kStateDim);
    t.jac.block<2, 6>(0, 0) = j;
    t.r_inv = light_info;
    t.robust = opts.robust;
    push(std::move(t), i);
  }

  const MatX lane_info = noise.r_lane.inverse();
  for (std::size_t i = 0; i < bundle.lane_matches.size(); ++i) {
    const auto& obs = bundle.lane_matches[i];
    Mat26 j;
    MeasurementTerm t;
    t.kind = TermKind::kLane;
    try {
      t.error = lane_error(obs.match, obs.y_rows, op.t_vm, map, cam, &j);
    } catch (const HorizontalLine&) {
      continue;
    }
    t.jac = MatX::Zero(2, kStateDim);
    t.jac.block<2, 6>(0, 0) = j;
    t.r_inv = lane_info;
    t.robust = opts.robust;
    push(std::move(t), i);
  }

  if (bundle.wheel) {
    MeasurementTerm t;
    t.kind = TermKind::kWheel;
    t.error = wheel_error(*bundle.wheel, op.varpi);
    t.jac = MatX::Zero(2, kStateDim);
    t.jac(0, 6) = 1.0;
    t.jac(1, 11) = 1.0;
    t.r_inv = noise.r_wheel.inverse();
    push(std::move(t), 0);
  }

  if (opts.pseudo_measurements) {
    Eigen::Matrix<double, 4, 12> j;
    MeasurementTerm t;
    t.kind = TermKind::kPseudo;
    t.error = pseudo_errors(op.t_vm, op.varpi, &j);
    t.jac = MatX::Zero(4, kStateDim);
    t.jac.block<4, 12>(0, 0) = j;
    t.r_inv = noise.r_pseudo.cwiseInverse().asDiagonal();
    push(std::move(t), 0);
  }
  return terms;
}

}  // namespace

void NoiseConfig::validate() const {
  const auto psd = [](const MatX& m, const char* name) {
    if (!m.isApprox(m.transpose(), 1e-12) && !(m - m.transpose()).isZero(1e-12)) {
      throw ValidationError(std::string(name) + " must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<MatX> eig(m);
    if (eig.eigenvalues().minCoeff() < 0.0) {
      throw ValidationError(std::string(name) + " must be positive semi-definite");
    }
  };
  psd(q_c, "q_c");
  psd(q_gm, "q_gm");
  if (!is_spd(r_vg)) throw ValidationError("r_vg must be symmetric positive definite");
  if (!is_spd(r_light)) throw ValidationError("r_light must be symmetric positive definite");
  if (!is_spd(r_lane)) throw ValidationError("r_lane must be symmetric positive definite");
  if (!is_spd(r_wheel)) throw ValidationError("r_wheel must be symmetric positive definite");
  if (!(r_pseudo.array() > 0.0).all()) throw ValidationError("r_pseudo entries must be > 0");
}

NoiseConfig NoiseConfig::Defaults() {
  NoiseConfig n;
  n.q_c = Mat6::Zero();
  n.q_c(0, 0) = 1.0;  // longitudinal acceleration, (m/s^2)^2 s
  n.q_c(5, 5) = 1.0;  // yaw acceleration, (rad/s^2)^2 s
  // Small noise on the planar-constrained axes keeps their information bounded.
  n.q_c(1, 1) = 0.1;
  n.q_c(2, 2) = 0.1;
  n.q_c(3, 3) = 0.01;
  n.q_c(4, 4) = 0.01;
  Vec6 q_gm;
  q_gm << 1e-6, 1e-6, 1e-6, 1e-8, 1e-8, 1e-8;
  n.q_gm = q_gm.asDiagonal();
  Vec6 r_vg;
  r_vg << 0.1 * 0.1, 0.1 * 0.1, 0.1 * 0.1, 0.005 * 0.005, 0.005 * 0.005, 0.005 * 0.005;
  n.r_vg = r_vg.asDiagonal();
  n.r_light = Mat2::Identity() * (1.5 * 1.5);
  n.r_lane = Mat2::Identity() * (2.0 * 2.0);
  n.r_wheel = Vec2(0.05 * 0.05, 0.005 * 0.005).asDiagonal();
  n.r_pseudo = Vec4::Constant(1e-4);
  return n;
}

Mat12 process_covariance(const Mat6& q_c, double dt) {
  Mat12 q;
  q.topLeftCorner<6, 6>() = (dt * dt * dt / 3.0) * q_c;
  q.topRightCorner<6, 6>() = (dt * dt / 2.0) * q_c;
  q.bottomLeftCorner<6, 6>() = (dt * dt / 2.0) * q_c;
  q.bottomRightCorner<6, 6>() = dt * q_c;
  return q;
}

Mat18 transition_jacobian(const Twist& varpi, double dt) {
  const Twist step = dt * varpi;
  Mat18 f = Mat18::Identity();
  f.block<6, 6>(0, 0) = adjoint(exp_se3(step));
  f.block<6, 6>(0, 6) = dt * se3_left_jacobian(step);
  return f;
}

EstimatorState predict(const EstimatorState& state, double dt, const NoiseConfig& noise) {
  if (!(dt > 0.0)) throw ValidationError("prediction step needs dt > 0");
  EstimatorState out = state;
  out.time = state.time + dt;
  out.t_vm = exp_se3(dt * state.varpi) * state.t_vm;
  const Mat18 f = transition_jacobian(state.varpi, dt);
  Mat18 q = Mat18::Zero();
  q.topLeftCorner<12, 12>() = process_covariance(noise.q_c, dt);
  q.bottomRightCorner<6, 6>() = dt * noise.q_gm;
  out.cov = f * state.cov * f.transpose() + q;
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

Vec6 gps_error(const Pose& t_vg_meas, const Pose& t_vm, const Pose& t_gm, Mat6* jac_vm,
               Mat6* jac_gm) {
  const Pose m = t_vg_meas * t_gm * t_vm.inverse();
  const Vec6 e = log_se3(m);
  if (jac_vm != nullptr || jac_gm != nullptr) {
    const Mat6 jinv = se3_left_jacobian_inverse(e);
    if (jac_vm != nullptr) *jac_vm = -jinv * adjoint(m);
    if (jac_gm != nullptr) *jac_gm = jinv * adjoint(t_vg_meas);
  }
  return e;
}

Vec2 light_error(const LightMatch& match, const Pose& t_vm, const SemanticMap& map,
                 const CameraModel& cam, Mat26* jac_vm) {
  const auto& light = map.light(match.light_id);
  Mat26 j;
  const Pixel proj = project_point(light.position, t_vm, cam, jac_vm != nullptr ? &j : nullptr);
  if (jac_vm != nullptr) *jac_vm = -j;
  return match.detection - proj;
}

Vec2 lane_error(const LaneMatch& match, const Vec2& y_rows, const Pose& t_vm,
                const SemanticMap& map, const CameraModel& cam, Mat26* jac_vm) {
  const auto& lane = map.lane(match.lane_id);
  if (match.segment_index + 1 >= lane.vertices.size()) {
    throw UnknownLandmark("lane " + std::to_string(match.lane_id) + " has no segment " +
                          std::to_string(match.segment_index));
  }
  const Vec3& a = lane.vertices[match.segment_index];
  const Vec3& b = lane.vertices[match.segment_index + 1];
  Mat36 dl;
  const Vec3 l = project_line(a, b, t_vm, cam, jac_vm != nullptr ? &dl : nullptr);
  Eigen::Matrix<double, 2, 3> dx;
  const Vec2 x_proj = line_x_at_y(l, y_rows, jac_vm != nullptr ? &dx : nullptr);
  const Vec2 x_det = line_x_at_y(match.fitted, y_rows);
  if (jac_vm != nullptr) *jac_vm = -dx * dl;
  return x_det - x_proj;
}

Vec2 wheel_error(const WheelMeasurement& meas, const Twist& varpi) {
  return Vec2(meas.v + varpi(0), meas.omega + varpi(5));
}

Vec2 roll_pitch(const Pose& t_vm) {
  // Third row of C_mv = C_vm^T is C_vm's third column.
  const Vec3 g = t_vm.rotation().col(2);
  const double h = std::hypot(g(1), g(2));
  return Vec2(std::atan2(g(1), g(2)), std::atan2(-g(0), h));
}

Vec4 pseudo_errors(const Pose& t_vm, const Twist& varpi, Eigen::Matrix<double, 4, 12>* jac) {
  const Mat3 c = t_vm.rotation();
  const Vec3 position = -c.transpose() * t_vm.translation();
  const Vec2 rp = roll_pitch(t_vm);
  if (jac != nullptr) {
    jac->setZero();
    // Vehicle position in map under a left perturbation: r - C^T drho.
    jac->block<1, 3>(0, 0) = -c.col(2).transpose();
    // Third row of C_mv moves as g - g^ dphi.
    const Vec3 g = c.col(2);
    const double n12 = g(1) * g(1) + g(2) * g(2);
    const double h = std::sqrt(n12);
    const Eigen::RowVector3d droll(0.0, g(2) / n12, -g(1) / n12);
    const double n = g.squaredNorm();
    const Eigen::RowVector3d dpitch(-h / n, g(0) * g(1) / (h * n), g(0) * g(2) / (h * n));
    const Mat3 dg = -so3_wedge(g);
    jac->block<1, 3>(1, 3) = droll * dg;
    jac->block<1, 3>(2, 3) = dpitch * dg;
    (*jac)(3, 7) = 1.0;
  }
  return Vec4(position.z(), rp(0), rp(1), varpi(1));
}

MatX cauchy_information(const VecX& e, const MatX& r_inv) {
  const double s = e.dot(r_inv * e);
  return r_inv / (1.0 + s);
}

Vec18 prior_error(const EstimatorState& op, const EstimatorState& pred, Mat18* jac) {
  Vec18 e;
  const Vec6 e_vm = log_se3(op.t_vm * pred.t_vm.inverse());
  const Vec6 e_gm = log_se3(op.t_gm * pred.t_gm.inverse());
  e << e_vm, op.varpi - pred.varpi, e_gm;
  if (jac != nullptr) {
    jac->setIdentity();
    jac->block<6, 6>(0, 0) = se3_left_jacobian_inverse(e_vm);
    jac->block<6, 6>(12, 12) = se3_left_jacobian_inverse(e_gm);
  }
  return e;
}

EstimatorState retract(const EstimatorState& state, const Vec18& dx) {
  EstimatorState out = state;
  out.t_vm = exp_se3(dx.segment<6>(0)) * state.t_vm;
  out.varpi = state.varpi + dx.segment<6>(6);
  out.t_gm = exp_se3(dx.segment<6>(12)) * state.t_gm;
  return out;
}

std::vector<MeasurementTerm> linearize_measurements(const EstimatorState& op,
                                                    const MeasurementBundle& bundle,
                                                    const SemanticMap& map,
                                                    const CameraModel& cam,
                                                    const NoiseConfig& noise,
                                                    const CorrectionOptions& opts) {
  return linearize_indexed(op, bundle, map, cam, noise, opts, nullptr);
}

EstimatorState correct(const EstimatorState& pred, const MeasurementBundle& bundle,
                       const SemanticMap& map, const CameraModel& cam, const NoiseConfig& noise,
                       const CorrectionOptions& opts, CorrectionReport* report) {
  Eigen::LDLT<Mat18> pred_ldlt(pred.cov);
  if (pred_ldlt.info() != Eigen::Success || !pred_ldlt.isPositive()) {
    throw SingularNormalEquations("predicted covariance is not invertible");
  }
  const Mat18 prior_info = pred_ldlt.solve(Mat18::Identity());

  CorrectionReport local;
  CorrectionReport& rep = report != nullptr ? *report : local;
  rep = CorrectionReport{};

  EstimatorState op = pred;
  Mat18 a_total = prior_info;
  for (int it = 0; it < opts.max_iters; ++it) {
    std::vector<std::size_t> sources;
    const auto terms = linearize_indexed(op, bundle, map, cam, noise, opts, &sources);
    Mat18 e_jac;
    const Vec18 e_v = prior_error(op, pred, &e_jac);

    std::vector<MatX> weights;
    std::vector<VecX> errors;
    weights.reserve(terms.size());
    Mat18 a = e_jac.transpose() * prior_info * e_jac;
    Vec18 g = e_jac.transpose() * prior_info * e_v;
    for (const auto& t : terms) {
      weights.push_back(t.robust ? cauchy_information(t.error, t.r_inv) : t.r_inv);
      errors.push_back(t.error);
      const MatX jw = t.jac.transpose() * weights.back();
      a.noalias() += jw * t.jac;
      g.noalias() += jw * t.error;
    }
    a = 0.5 * (a + a.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Mat18> eig(a, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    rep.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(lo > 0.0) || rep.condition > opts.max_condition) {
      throw SingularNormalEquations("normal equations are singular (condition " +
                                    std::to_string(rep.condition) + ")");
    }
    a_total = a;
    const Vec18 dx = a.ldlt().solve(-g);

    const double cost0 = frozen_cost(e_v, prior_info, terms, weights, errors);
    double step = 1.0;
    bool accepted = false;
    EstimatorState candidate;
    double cost1 = cost0;
    for (int h = 0; h <= opts.max_halvings; ++h) {
      candidate = retract(op, step * dx);
      bool valid = true;
      std::vector<VecX> cand_errors;
      cand_errors.reserve(terms.size());
      try {
        for (std::size_t i = 0; i < terms.size(); ++i) {
          cand_errors.push_back(evaluate_term(terms[i], sources[i], candidate, bundle, map, cam));
        }
      } catch (const Error&) {
        valid = false;
      }
      if (valid) {
        cost1 = frozen_cost(prior_error(candidate, pred), prior_info, terms, weights, cand_errors);
        if (cost1 <= cost0) {
          accepted = true;
          break;
        }
      }
      step *= 0.5;
      ++rep.halvings;
    }
    ++rep.iterations;
    if (!accepted) break;
    rep.costs.emplace_back(cost0, cost1);
    op = candidate;
    if ((step * dx).norm() < opts.tol) {
      rep.converged = true;
      break;
    }
  }

  EstimatorState out = op;
  out.time = pred.time;
  Eigen::LDLT<Mat18> ldlt(a_total);
  out.cov = ldlt.solve(Mat18::Identity());
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

EstimatorState init_state(const Pose& gps_first, const Pose& offset_guess, const Mat18& cov0) {
  if (!is_spd(cov0)) throw ValidationError("initial covariance must be symmetric positive definite");
  EstimatorState s;
  s.t_gm = offset_guess;
  s.t_vm = gps_first * offset_guess;
  s.varpi = Twist::Zero();
  s.cov = cov0;
  return s;
}

Mat18 initial_covariance(double pose_trans_std, double pose_rot_std, double vel_lin_std,
                         double vel_ang_std, double offset_trans_std, double offset_rot_std) {
  Vec18 sd;
  sd << Vec3::Constant(pose_trans_std), Vec3::Constant(pose_rot_std),
      Vec3::Constant(vel_lin_std), Vec3::Constant(vel_ang_std), Vec3::Constant(offset_trans_std),
      Vec3::Constant(offset_rot_std);
  return sd.cwiseProduct(sd).asDiagonal();
}

Mat18 default_initial_covariance() { return initial_covariance(3.0, 0.05, 10.0, 1.0, 3.0, 0.05); }

}  // namespace semloc
