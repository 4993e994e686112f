/**
 * \file association.hpp
 * \brief Detection-to-map data association in image space.
 *
 * Traffic lights: translation-only ICP between detections and projected map
 * lights, then one-to-one greedy nearest neighbour with a pixel gate.
 * Lane markings: bottom-of-image subsampling, nearest projected segment per
 * pixel with a gate, and a total-least-squares line per matched boundary.
 */
#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "semloc/geometry.hpp"
#include "semloc/semantic_map.hpp"

namespace semloc {

struct LightCandidate {
  std::int64_t light_id = 0;
  Pixel projected = Pixel::Zero();
};

struct LightMatch {
  /// Raw detected pixel (not ICP-shifted).
  Pixel detection = Pixel::Zero();
  std::int64_t light_id = 0;
  Pixel projected = Pixel::Zero();
};

struct LightAssociation {
  std::vector<LightMatch> matches;  // sorted by light_id
  std::vector<Pixel> outliers;      // sorted by (u, v)
  /// Image translation estimated by ICP (added to detections).
  Pixel shift = Pixel::Zero();
};

struct LaneMatch {
  std::int64_t lane_id = 0;
  /// Polyline segment (vertex i to i+1) the projection was taken from.
  std::size_t segment_index = 0;
  ImageLine fitted;
  ImageLine projected_segment;
  std::size_t support = 0;
};

/// Lane match plus the two image rows at which it is compared.
struct LaneObservation {
  LaneMatch match;
  Vec2 y_rows = Vec2::Zero();
};

struct ProjectedLane {
  std::int64_t lane_id = 0;
  std::vector<ImageSegment> segments;
};

struct AssignedPixel {
  Pixel pixel = Pixel::Zero();
  std::size_t segment_index = 0;
  double distance = 0.0;
};

struct LanePixelAssignment {
  std::map<std::int64_t, std::vector<AssignedPixel>> by_lane;
  std::vector<Pixel> outliers;
};

/**
 * \brief Keeps pixels in the bottom part of the image, then every stride-th
 * survivor in input order.
 *
 * A pixel survives when v >= (1 - bottom_fraction) * image_height.
 */
std::vector<Pixel> subsample_pixels(const std::vector<Pixel>& pixels, int stride,
                                    double bottom_fraction, int image_height);

/**
 * \brief ICP + nearest neighbour association of light detections.
 *
 * Each of the icp_iters rounds pairs every (shifted) detection with its
 * nearest candidate and moves the shift by the mean residual of the pairs
 * closer than 2 * gate. The final assignment is greedy one-to-one by
 * increasing aligned distance; aligned distances above gate are outliers.
 */
LightAssociation associate_lights(const std::vector<Pixel>& detections,
                                  const std::vector<LightCandidate>& candidates, double gate,
                                  int icp_iters);

/// Assigns each pixel to the nearest projected segment; ties go to the smaller lane id.
LanePixelAssignment match_lane_pixels(const std::vector<Pixel>& pixels,
                                      const std::vector<ProjectedLane>& projected, double gate);

/// Orthogonal (total) least-squares line, returned at the extremal projections.
ImageLine fit_line(const std::vector<Pixel>& pixels);

/// Sum of squared orthogonal distances from pixels to the line.
double line_residual(const ImageLine& line, const std::vector<Pixel>& pixels);

double point_segment_distance_2d(const Pixel& p, const Pixel& a, const Pixel& b);

struct AssociationOptions {
  double light_gate = 40.0;
  int icp_iters = 3;
  double light_radius = 100.0;
  double lane_gate = 25.0;
  double lane_radius = 50.0;
  int lane_stride = 2;
  double lane_bottom_fraction = 0.4;
  std::size_t min_lane_support = 6;
  /// Comparison rows as fractions of the image height.
  Vec2 lane_row_fractions = Vec2(0.6, 0.9);
  double min_row_separation = 10.0;
  /// Lines closer than this to horizontal (degrees) give no lane observation.
  double min_line_angle_deg = 15.0;
};

struct FrameAssociation {
  LightAssociation lights;
  std::vector<LaneObservation> lanes;
  std::vector<Pixel> lane_outliers;
  std::size_t lane_pixels_used = 0;
};

/// Projects nearby lights into the image; candidates farther than margin
/// outside the image are dropped.
std::vector<LightCandidate> light_candidates(const SemanticMap& map, const Pose& t_vm,
                                             const CameraModel& cam, double radius, double margin);

std::vector<ProjectedLane> project_lanes(const SemanticMap& map, const Pose& t_vm,
                                         const CameraModel& cam, double radius);

/// Fits one line per matched boundary and picks its comparison rows.
std::vector<LaneObservation> build_lane_observations(const LanePixelAssignment& assignment,
                                                     const std::vector<ProjectedLane>& projected,
                                                     const CameraModel& cam,
                                                     const AssociationOptions& opts);

/// Full association of one frame's detections against the map at pose t_vm.
FrameAssociation associate_frame(const std::vector<Pixel>& light_detections,
                                 const std::vector<Pixel>& lane_pixels, const SemanticMap& map,
                                 const Pose& t_vm, const CameraModel& cam,
                                 const AssociationOptions& opts);

/// Vehicle origin expressed in the map frame.
inline Vec3 vehicle_position(const Pose& t_vm) { return t_vm.inverse().translation(); }

}  // namespace semloc
