/**
 * \file semantic_map.hpp
 * \brief Lightweight HD map: lane-boundary polylines and traffic-light points.
 *
 * File format (UTF-8 JSON, metres, map frame):
 *
 *   {"lanes":[{"id":int,"vertices":[[x,y,z],...]},...],
 *    "lights":[{"id":int,"position":[x,y,z]},...]}
 *
 * Queries are linear scans; maps are expected to hold at most a few thousand
 * primitives.
 */
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "semloc/liegroup.hpp"

namespace semloc {

struct LaneBoundary {
  std::int64_t id = 0;
  std::vector<Vec3> vertices;
};

struct TrafficLight {
  std::int64_t id = 0;
  Vec3 position = Vec3::Zero();
};

class SemanticMap {
 public:
  SemanticMap() = default;
  /// Throws ValidationError on duplicate ids or degenerate polylines.
  SemanticMap(std::vector<LaneBoundary> lanes, std::vector<TrafficLight> lights);

  const std::vector<LaneBoundary>& lanes() const { return lanes_; }
  const std::vector<TrafficLight>& lights() const { return lights_; }

  /// Throws UnknownLandmark if the id is absent.
  const LaneBoundary& lane(std::int64_t id) const;
  const TrafficLight& light(std::int64_t id) const;

 private:
  std::vector<LaneBoundary> lanes_;
  std::vector<TrafficLight> lights_;
  std::unordered_map<std::int64_t, std::size_t> lane_index_;
  std::unordered_map<std::int64_t, std::size_t> light_index_;
};

/// Throws ParseError for malformed documents, ValidationError for bad content.
SemanticMap load_map(std::string_view bytes);
SemanticMap load_map_file(const std::string& path);

/// Canonical serialization: compact JSON, 17 significant digits, trailing newline.
std::string save_map(const SemanticMap& map);

/// Lights within radius of center, by increasing distance then id.
std::vector<TrafficLight> nearby_lights(const SemanticMap& map, const Vec3& center, double radius);

/// Boundaries whose closest point lies within radius, by distance then id.
std::vector<LaneBoundary> nearby_lanes(const SemanticMap& map, const Vec3& center, double radius);

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b);
double point_polyline_distance(const Vec3& p, const std::vector<Vec3>& line);

/// Decimal form with 17 significant digits (round-trips every double).
std::string format_double(double value);

}  // namespace semloc
