/**
 * \file simulator.hpp
 * \brief Deterministic synthetic driving world.
 *
 * The world is a rectangular road grid with two-way roads (right-hand
 * traffic), lane-boundary polylines on the z = 0 plane and traffic lights at
 * the intersection corners. The vehicle drives counter-clockwise around the
 * outer ring of the grid in the right lane.
 *
 * Random numbers come from a counter-based generator keyed by
 * (seed, frame, channel): frames can be synthesized independently and adding a
 * channel never changes the draws of another.
 */
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "semloc/estimator.hpp"
#include "semloc/geometry.hpp"
#include "semloc/semantic_map.hpp"

namespace semloc {

struct WorldParams {
  int blocks_x = 2;
  int blocks_y = 2;
  double block_size = 125.0;      ///< m between intersection centres
  double lane_width = 3.5;        ///< m
  int lanes_per_direction = 1;
  int lights_per_intersection = 4;
  double light_height = 5.0;      ///< m
  double light_corner_offset = 5.5;  ///< m from intersection centre along x and y
  double marking_margin = 1.0;    ///< m between intersection box and marking ends
  double vertex_spacing = 10.0;   ///< m between polyline vertices
  double turn_radius = 8.0;       ///< m
  double cruise_speed = 10.0;     ///< m/s
  double turn_speed = 5.0;        ///< m/s
  double max_accel = 1.5;         ///< m/s^2
  double start_arc = 75.0;        ///< m along the route at t = 0

  void validate() const;
};

struct Scenario {
  std::uint64_t seed = 1;
  double duration = 120.0;  ///< s
  double rate = 10.0;       ///< Hz
  Pose offset_true;         ///< T_gm
  /// Offset random-walk covariance per second; zero disables drift.
  Mat6 offset_drift = Mat6::Zero();
  /// Half-open GPS dropout intervals [start, end) in seconds.
  std::vector<std::pair<double, double>> dropouts;
  double light_noise_px = 1.5;
  double lane_noise_px = 1.0;
  double gps_pos_std = 0.1;   ///< m
  double gps_rot_std = 0.005; ///< rad
  double wheel_v_std = 0.05;  ///< m/s
  double wheel_omega_std = 0.005;  ///< rad/s
  double outlier_rate = 0.0;
  double light_detection_range = 80.0;  ///< m
  double lane_detection_range = 40.0;   ///< m
  double lane_sample_spacing = 0.1;     ///< m along each boundary
  WorldParams world;

  void validate() const;
  std::size_t frame_count() const;
  double frame_time(std::size_t k) const { return static_cast<double>(k) / rate; }
  bool gps_available(double t) const;
};

struct GroundTruthFrame {
  double t = 0.0;
  Pose t_vm_true;
  /// Generalized velocity carrying this frame's pose to the next one.
  Twist varpi_true = Twist::Zero();
  Pose t_gm_true;
  double arc = 0.0;  ///< distance travelled since t = 0
};

/// Raw sensor output of one time step (detections are not associated).
struct DetectionFrame {
  std::size_t index = 0;
  double t = 0.0;
  std::optional<Pose> gps;
  std::vector<Pixel> light_detections;
  std::vector<Pixel> lane_pixels;
  WheelMeasurement wheel;
};

/// splitmix64-based counter generator.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t frame, std::uint64_t channel);
  std::uint64_t next_u64();
  double uniform();  ///< [0, 1)
  double normal();   ///< standard normal, Box-Muller
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t state_;
};

enum class Channel : std::uint64_t {
  kGps = 1,
  kLight = 2,
  kLightOutlier = 3,
  kLane = 4,
  kLaneOutlier = 5,
  kWheel = 6,
  kOffsetDrift = 7,
};

/// Lane-centre route around the outer ring of the grid.
class Route {
 public:
  explicit Route(const WorldParams& world);

  double length() const { return length_; }
  /// Vehicle-from-map pose at arc length s (wraps around the loop).
  Pose pose_at(double s) const;
  double curvature_at(double s) const;
  double speed_at(double s) const;
  /// Distance from s to the nearest turn (0 inside a turn).
  double distance_to_turn(double s) const;

 private:
  struct Piece {
    Vec2 start;
    double heading = 0.0;
    double length = 0.0;
    double curvature = 0.0;
    double s0 = 0.0;
  };
  const Piece& piece_at(double s) const;
  double wrap(double s) const;

  WorldParams world_;
  std::vector<Piece> pieces_;
  double length_ = 0.0;
};

SemanticMap generate_world(const Scenario& scenario);

std::vector<GroundTruthFrame> generate_trajectory(const Scenario& scenario, const SemanticMap& map);

DetectionFrame simulate_frame(const GroundTruthFrame& truth, std::size_t index,
                              const Scenario& scenario, const SemanticMap& map,
                              const CameraModel& cam);

/// One frame per line, see README for the schema.
std::string frame_to_json_line(const DetectionFrame& frame);
DetectionFrame frame_from_json_line(const std::string& line);

}  // namespace semloc
