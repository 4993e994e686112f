/**
 * \file estimator.hpp
 * \brief Modified iterated EKF jointly estimating vehicle pose, body velocity
 * and the GPS-to-map offset.
 *
 * State perturbation order (18 DOF): dxi_vm (6), dvarpi (6), dxi_gm (6).
 * Poses use left perturbations T = exp(dxi^) T_op.
 *
 * Velocity convention: varpi is the generalized velocity of the
 * vehicle-from-map transform, T_vm(k) = exp(dt varpi^) T_vm(k-1). A vehicle
 * driving forward at speed v while yawing left at rate w therefore has
 * varpi = (-v, 0, 0, 0, 0, -w).
 */
#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "semloc/association.hpp"
#include "semloc/geometry.hpp"
#include "semloc/liegroup.hpp"
#include "semloc/semantic_map.hpp"

namespace semloc {

inline constexpr int kStateDim = 18;
using Mat2 = Eigen::Matrix2d;
using Mat12 = Eigen::Matrix<double, 12, 12>;
using Mat18 = Eigen::Matrix<double, kStateDim, kStateDim>;
using Vec18 = Eigen::Matrix<double, kStateDim, 1>;
using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

struct EstimatorState {
  double time = 0.0;
  Pose t_vm;
  Twist varpi = Twist::Zero();
  Pose t_gm;
  Mat18 cov = Mat18::Identity();
};

/**
 * \brief Process and observation noise.
 *
 * q_gm is the offset random-walk covariance per second (scaled by dt).
 * r_pseudo holds the variances for (elevation, roll, pitch, lateral velocity).
 */
struct NoiseConfig {
  Mat6 q_c = Mat6::Zero();
  Mat6 q_gm = Mat6::Zero();
  Mat6 r_vg = Mat6::Identity();
  Mat2 r_light = Mat2::Identity();
  Mat2 r_lane = Mat2::Identity();
  Mat2 r_wheel = Mat2::Identity();
  Vec4 r_pseudo = Vec4::Constant(1e-4);

  void validate() const;
  static NoiseConfig Defaults();
};

struct WheelMeasurement {
  double v = 0.0;      ///< forward speed, m/s
  double omega = 0.0;  ///< yaw rate (left positive), rad/s
};

struct MeasurementBundle {
  std::optional<Pose> gps;  ///< T_vg
  std::vector<LightMatch> light_matches;
  std::vector<LaneObservation> lane_matches;
  std::optional<WheelMeasurement> wheel;
  double dt = 0.1;
};

struct CorrectionOptions {
  double tol = 1e-6;
  int max_iters = 10;
  int max_halvings = 5;
  bool pseudo_measurements = true;
  /// Cauchy reweighting of light and lane terms.
  bool robust = true;
  double max_condition = 1e12;
};

/// Diagnostics of one correct() call.
struct CorrectionReport {
  int iterations = 0;
  bool converged = false;
  int halvings = 0;
  /// Frozen-weight cost before and after every accepted iteration.
  std::vector<std::pair<double, double>> costs;
  double condition = 0.0;
};

/// WNOA process covariance [dt^3/3 Qc, dt^2/2 Qc; dt^2/2 Qc, dt Qc].
Mat12 process_covariance(const Mat6& q_c, double dt);

/// Linearized transition Jacobian F for a step of length dt at velocity varpi.
Mat18 transition_jacobian(const Twist& varpi, double dt);

EstimatorState predict(const EstimatorState& state, double dt, const NoiseConfig& noise);

enum class TermKind { kGps, kLight, kLane, kWheel, kPseudo };

/// One linearized measurement term e(x_op + dx) ~ e + jac * dx.
struct MeasurementTerm {
  TermKind kind = TermKind::kGps;
  VecX error;
  MatX jac;    ///< rows x 18
  MatX r_inv;  ///< inverse measurement covariance
  bool robust = false;
};

/// e = log(T_vg * (T_vm * T_gm^-1)^-1); optional 6x6 Jacobians.
Vec6 gps_error(const Pose& t_vg_meas, const Pose& t_vm, const Pose& t_gm, Mat6* jac_vm = nullptr,
               Mat6* jac_gm = nullptr);

/// e = detection - projection of the matched map light.
Vec2 light_error(const LightMatch& match, const Pose& t_vm, const SemanticMap& map,
                 const CameraModel& cam, Mat26* jac_vm = nullptr);

/// e = columns of the detected line - columns of the projected map line at y_rows.
Vec2 lane_error(const LaneMatch& match, const Vec2& y_rows, const Pose& t_vm,
                const SemanticMap& map, const CameraModel& cam, Mat26* jac_vm = nullptr);

/// e = (v, omega) - h(varpi) with h(varpi) = (-varpi_x, -varpi_yaw).
Vec2 wheel_error(const WheelMeasurement& meas, const Twist& varpi);

/// (elevation, roll, pitch, lateral velocity), each constrained to zero.
Vec4 pseudo_errors(const Pose& t_vm, const Twist& varpi,
                   Eigen::Matrix<double, 4, 12>* jac = nullptr);

/// Roll and pitch of the vehicle in the map frame (Z-Y-X Euler of C_mv).
Vec2 roll_pitch(const Pose& t_vm);

/// Cauchy-reweighted information, r_inv / (1 + e^T r_inv e).
MatX cauchy_information(const VecX& e, const MatX& r_inv);

/// Prior error against the predicted means and its Jacobian E.
Vec18 prior_error(const EstimatorState& op, const EstimatorState& pred, Mat18* jac = nullptr);

/// Applies dx to the state (left update for poses, additive for velocity).
EstimatorState retract(const EstimatorState& state, const Vec18& dx);

/// Linearizes every measurement of the bundle about op.
std::vector<MeasurementTerm> linearize_measurements(const EstimatorState& op,
                                                    const MeasurementBundle& bundle,
                                                    const SemanticMap& map,
                                                    const CameraModel& cam,
                                                    const NoiseConfig& noise,
                                                    const CorrectionOptions& opts);

/// Gauss-Newton correction over all measurements of one time step.
EstimatorState correct(const EstimatorState& pred, const MeasurementBundle& bundle,
                       const SemanticMap& map, const CameraModel& cam, const NoiseConfig& noise,
                       const CorrectionOptions& opts = {}, CorrectionReport* report = nullptr);

EstimatorState init_state(const Pose& gps_first, const Pose& offset_guess, const Mat18& cov0);

/// Initial covariance with standard deviations per block (translation,
/// rotation) for pose and offset, and (linear, angular) for velocity.
Mat18 initial_covariance(double pose_trans_std, double pose_rot_std, double vel_lin_std,
                         double vel_ang_std, double offset_trans_std, double offset_rot_std);

Mat18 default_initial_covariance();

}  // namespace semloc
