#include "semloc/geometry.hpp"

#include <cmath>
#include <optional>
#include <utility>

#include "semloc/errors.hpp"

namespace semloc {

namespace {

Mat3 intrinsics(const CameraModel& cam) {
  Mat3 k;
  k << cam.fx, 0.0, cam.cx,
       0.0, cam.fy, cam.cy,
       0.0, 0.0, 1.0;
  return k;
}

// Liang-Barsky clip of segment p0->p1 against [0,w]x[0,h].
std::optional<std::pair<Pixel, Pixel>> clip_to_image(const Pixel& p0, const Pixel& p1, double w,
                                                     double h) {
  const Pixel d = p1 - p0;
  double t0 = 0.0;
  double t1 = 1.0;
  const double p[4] = {-d.x(), d.x(), -d.y(), d.y()};
  const double q[4] = {p0.x(), w - p0.x(), p0.y(), h - p0.y()};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return std::nullopt;
      continue;
    }
    const double r = q[i] / p[i];
    if (p[i] < 0.0) {
      if (r > t1) return std::nullopt;
      if (r > t0) t0 = r;
    } else {
      if (r < t0) return std::nullopt;
      if (r < t1) t1 = r;
    }
  }
  return std::make_pair(Pixel(p0 + t0 * d), Pixel(p0 + t1 * d));
}

}  // namespace

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ValidationError("camera focal lengths must be > 0");
  if (width <= 0 || height <= 0) throw ValidationError("camera image size must be > 0");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw ValidationError("camera principal point must lie inside the image");
  }
}

Mat3 forward_camera_rotation() {
  Mat3 c;
  c << 0.0, -1.0, 0.0,
       0.0, 0.0, -1.0,
       1.0, 0.0, 0.0;
  return c;
}

CameraModel default_camera() {
  CameraModel cam;
  const Mat3 c = forward_camera_rotation();
  const Vec3 mount(1.5, 0.0, 1.5);
  cam.t_cv = Pose(c, -c * mount);
  return cam;
}

ImageLine::ImageLine(const Pixel& a_in, const Pixel& b_in) : a(a_in), b(b_in) {
  if ((a - b).norm() <= 1e-6) throw DegenerateInput("image line needs two distinct pixels");
}

Pixel project_point(const Vec3& p_m, const Pose& t_vm, const CameraModel& cam, Mat26* jac) {
  const Vec3 p_v = t_vm * p_m;
  const Vec3 p_c = cam.t_cv * p_v;
  const double z = p_c.z();
  if (z <= kNearPlane) throw BehindCamera("point is at or behind the camera near plane");
  const Pixel px(cam.fx * p_c.x() / z + cam.cx, cam.fy * p_c.y() / z + cam.cy);
  if (jac != nullptr) {
    Eigen::Matrix<double, 2, 3> dpix;
    dpix << cam.fx / z, 0.0, -cam.fx * p_c.x() / (z * z),
            0.0, cam.fy / z, -cam.fy * p_c.y() / (z * z);
    // d p_v / d xi = [I, -p_v^]
    Eigen::Matrix<double, 3, 6> dpv;
    dpv << Mat3::Identity(), -so3_wedge(p_v);
    *jac = dpix * cam.t_cv.rotation() * dpv;
  }
  return px;
}

Pixel project_point(const Vec3& p_m, const Pose& t_vm, const CameraModel& cam) {
  return project_point(p_m, t_vm, cam, nullptr);
}

Mat26 point_projection_jacobian(const Vec3& p_m, const Pose& t_vm, const CameraModel& cam) {
  Mat26 jac;
  project_point(p_m, t_vm, cam, &jac);
  return jac;
}

std::vector<ImageSegment> project_polyline(const std::vector<Vec3>& line_m, const Pose& t_vm,
                                           const CameraModel& cam) {
  std::vector<ImageSegment> out;
  if (line_m.size() < 2) return out;
  const Pose t_cm = cam.t_cv * t_vm;
  const Mat3 k = intrinsics(cam);
  for (std::size_t i = 0; i + 1 < line_m.size(); ++i) {
    Vec3 a = t_cm * line_m[i];
    Vec3 b = t_cm * line_m[i + 1];
    if (a.z() < kNearPlane && b.z() < kNearPlane) continue;
    if (a.z() < kNearPlane) {
      a = a + (kNearPlane - a.z()) / (b.z() - a.z()) * (b - a);
      a.z() = kNearPlane;
    } else if (b.z() < kNearPlane) {
      b = b + (kNearPlane - b.z()) / (a.z() - b.z()) * (a - b);
      b.z() = kNearPlane;
    }
    const Vec3 ha = k * a;
    const Vec3 hb = k * b;
    const Pixel pa = ha.head<2>() / ha.z();
    const Pixel pb = hb.head<2>() / hb.z();
    const auto clipped = clip_to_image(pa, pb, cam.width, cam.height);
    if (!clipped || (clipped->first - clipped->second).norm() <= 1e-6) continue;
    out.push_back({ImageLine(clipped->first, clipped->second), i});
  }
  return out;
}

Vec2 line_x_at_y(const ImageLine& line, const Vec2& y_rows) {
  const Pixel d = line.b - line.a;
  if (std::abs(d.y()) <= 1e-6) throw HorizontalLine("line is horizontal in the image");
  Vec2 x;
  for (int j = 0; j < 2; ++j) x(j) = line.a.x() + (y_rows(j) - line.a.y()) * d.x() / d.y();
  return x;
}

Vec3 project_line(const Vec3& a_m, const Vec3& b_m, const Pose& t_vm, const CameraModel& cam,
                  Mat36* jac) {
  const Mat3 k = intrinsics(cam);
  const Vec3 a_v = t_vm * a_m;
  const Vec3 b_v = t_vm * b_m;
  const Mat3 kc = k * cam.t_cv.rotation();
  const Vec3 qa = kc * a_v + k * cam.t_cv.translation();
  const Vec3 qb = kc * b_v + k * cam.t_cv.translation();
  const Vec3 l = qa.cross(qb);
  if (jac != nullptr) {
    Eigen::Matrix<double, 3, 6> dqa;
    Eigen::Matrix<double, 3, 6> dqb;
    dqa << kc, -kc * so3_wedge(a_v);
    dqb << kc, -kc * so3_wedge(b_v);
    // d(qa x qb) = dqa x qb + qa x dqb
    *jac = -so3_wedge(qb) * dqa + so3_wedge(qa) * dqb;
  }
  return l;
}

Vec2 line_x_at_y(const Vec3& l, const Vec2& y_rows, Eigen::Matrix<double, 2, 3>* jac) {
  const double a = l(0);
  if (std::abs(a) <= 1e-9 * l.head<2>().norm() || a == 0.0) {
    throw HorizontalLine("line is horizontal in the image");
  }
  Vec2 x;
  for (int j = 0; j < 2; ++j) x(j) = -(l(1) * y_rows(j) + l(2)) / a;
  if (jac != nullptr) {
    for (int j = 0; j < 2; ++j) {
      (*jac)(j, 0) = (l(1) * y_rows(j) + l(2)) / (a * a);
      (*jac)(j, 1) = -y_rows(j) / a;
      (*jac)(j, 2) = -1.0 / a;
    }
  }
  return x;
}

}  // namespace semloc
