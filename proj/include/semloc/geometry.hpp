/**
 * \file geometry.hpp
 * \brief Pinhole camera model, map-to-image projection and line sampling.
 *
 * Frame conventions (used everywhere in the library):
 *   vehicle frame: x forward, y left, z up
 *   camera frame:  z forward (optical axis), x right, y down
 *   image:         u horizontal (columns), v vertical (rows), origin top-left
 *
 * Jacobians are taken with respect to a left perturbation of the
 * vehicle-from-map pose, T_vm <- exp(dxi^) T_vm.
 */
#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "semloc/liegroup.hpp"

namespace semloc {

/// Image coordinates (u, v) in pixels.
using Pixel = Vec2;
using Mat26 = Eigen::Matrix<double, 2, 6>;
using Mat36 = Eigen::Matrix<double, 3, 6>;

/// Points closer than this along the optical axis are not projected.
inline constexpr double kNearPlane = 0.1;

struct CameraModel {
  double fx = 640.0;
  double fy = 640.0;
  double cx = 640.0;
  double cy = 360.0;
  int width = 1280;
  int height = 720;
  /// Camera-from-vehicle extrinsic.
  Pose t_cv;

  /// Throws ValidationError if intrinsics are out of range.
  void validate() const;
  bool in_image(const Pixel& p) const {
    return p.x() >= 0.0 && p.x() <= width && p.y() >= 0.0 && p.y() <= height;
  }
};

/// Camera-from-vehicle rotation for a forward-looking, level camera.
Mat3 forward_camera_rotation();

/**
 * \brief Default simulation camera: 1280x720, f = 640 px, principal point at
 * the image centre, mounted level 1.5 m ahead of the vehicle origin at 1.5 m
 * height looking along vehicle x.
 */
CameraModel default_camera();

/// Infinite image line through two distinct pixels.
struct ImageLine {
  Pixel a;
  Pixel b;

  ImageLine() = default;
  /// Throws DegenerateInput if the pixels are closer than 1e-6 px.
  ImageLine(const Pixel& a, const Pixel& b);
};

/// Projected polyline piece, clipped to near plane and image.
struct ImageSegment {
  ImageLine line;
  /// Index i of the polyline segment (vertex i to i+1) it came from.
  std::size_t segment_index = 0;
};

/// Perspective projection of a map point. Throws BehindCamera at depth <= 0.1 m.
Pixel project_point(const Vec3& p_m, const Pose& t_vm, const CameraModel& cam);

/// Same as project_point, also returning the 2x6 Jacobian w.r.t. dxi_vm.
Pixel project_point(const Vec3& p_m, const Pose& t_vm, const CameraModel& cam, Mat26* jac);

Mat26 point_projection_jacobian(const Vec3& p_m, const Pose& t_vm, const CameraModel& cam);

/// Projects every segment of a map polyline; segments that end up invisible
/// are dropped, so the result may be empty.
std::vector<ImageSegment> project_polyline(const std::vector<Vec3>& line_m, const Pose& t_vm,
                                           const CameraModel& cam);

/// Column coordinates where the line crosses rows y(0) and y(1).
Vec2 line_x_at_y(const ImageLine& line, const Vec2& y_rows);

/**
 * \brief Image line (homogeneous coefficients l, l . (u,v,1) = 0) of the 3D
 * line through map points a_m and b_m.
 *
 * Valid whatever the depth of the two points, as long as the 3D line does not
 * pass through the camera centre. Optionally returns dl/dxi_vm.
 */
Vec3 project_line(const Vec3& a_m, const Vec3& b_m, const Pose& t_vm, const CameraModel& cam,
                  Mat36* jac = nullptr);

/// Columns of a homogeneous line at the two rows; optional 2x3 Jacobian dx/dl.
Vec2 line_x_at_y(const Vec3& l, const Vec2& y_rows, Eigen::Matrix<double, 2, 3>* jac = nullptr);

}  // namespace semloc
