/**
 * \file config.hpp
 * \brief Run configuration, its JSON form and the canned scenarios.
 *
 * Configs carry a "schema_version" field and reject unknown keys. Missing keys
 * keep their defaults, so the resolved echo written next to the artifacts is
 * always a complete config.
 */
#pragma once

#include <string>

#include <json.hpp>

#include "semloc/association.hpp"
#include "semloc/estimator.hpp"
#include "semloc/simulator.hpp"

namespace semloc {

inline constexpr int kSchemaVersion = 1;

/// Pose written as translation + rotation vector.
struct PoseSpec {
  Vec3 translation = Vec3::Zero();
  Vec3 rotation_vector = Vec3::Zero();

  Pose pose() const { return Pose(so3_exp(rotation_vector), translation); }
};

struct InitialStd {
  double pose_trans = 3.0;
  double pose_rot = 0.05;
  double vel_lin = 10.0;
  double vel_ang = 1.0;
  double offset_trans = 3.0;
  double offset_rot = 0.05;
};

struct EstimatorOptions {
  CorrectionOptions correction;
  InitialStd initial_std;
  PoseSpec offset_guess;
  double burn_in = 10.0;  ///< s excluded from the summary table
};

struct RunConfig {
  std::string name = "custom";
  Scenario scenario;
  PoseSpec offset_true{Vec3(2.0, 2.0, 0.0), Vec3::Zero()};
  Vec6 offset_drift_diag = Vec6::Zero();
  CameraModel camera = default_camera();
  NoiseConfig noise = NoiseConfig::Defaults();
  EstimatorOptions estimator;
  AssociationOptions association;
  std::string output_dir;

  /// Pushes offset_true/offset_drift_diag into the scenario and validates
  /// everything; throws ValidationError.
  void resolve();
};

/// Throws ParseError (malformed or unknown keys) or ValidationError.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::string& path);
nlohmann::json config_to_json(const RunConfig& config);

/// "nominal" or "dropout_30_60"; throws ValidationError for other names.
RunConfig canned_config(const std::string& name);

}  // namespace semloc
