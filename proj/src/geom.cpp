#include "mmf/geom.hpp"

#include <algorithm>
#include <limits>

#include <Eigen/Dense>

#include "mmf/errors.hpp"

namespace mmf {

double wrap_angle(double a) {
  double r = std::fmod(a + kPi, 2.0 * kPi);
  if (r < 0.0) r += 2.0 * kPi;
  r -= kPi;
  // fmod can land exactly on +pi after the shift for inputs just below -pi.
  if (r >= kPi) r -= 2.0 * kPi;
  return r;
}

double wrap_angle_half(double a) {
  double r = std::fmod(a + 0.5 * kPi, kPi);
  if (r < 0.0) r += kPi;
  r -= 0.5 * kPi;
  if (r >= 0.5 * kPi) r -= kPi;
  return r;
}

bool is_rotation(const Eigen::Matrix3d& r, double tol) {
  if (!r.allFinite()) return false;
  const Eigen::Matrix3d err = r.transpose() * r - Eigen::Matrix3d::Identity();
  return err.cwiseAbs().maxCoeff() <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

void CalibrationProfile::validate() const {
  if (!(intrinsics.fx > 0.0) || !(intrinsics.fy > 0.0) || !std::isfinite(intrinsics.fx) ||
      !std::isfinite(intrinsics.fy)) {
    throw InvalidInput("calibration: focal lengths must be positive and finite");
  }
  if (!std::isfinite(intrinsics.cx) || !std::isfinite(intrinsics.cy)) {
    throw InvalidInput("calibration: principal point must be finite");
  }
  if (image_size.height <= 0 || image_size.width <= 0) {
    throw InvalidInput("calibration: image size must be positive");
  }
  if (!is_rotation(lidar_to_cam.rotation)) {
    throw InvalidInput("calibration: lidar_to_cam rotation is not orthonormal with det +1");
  }
  if (!lidar_to_cam.translation.allFinite()) {
    throw InvalidInput("calibration: lidar_to_cam translation must be finite");
  }
  if (rectification && !is_rotation(*rectification)) {
    throw InvalidInput("calibration: rectification is not orthonormal with det +1");
  }
}

CalibrationProfile CalibrationProfile::identity(ImageSize size) {
  CalibrationProfile c;
  c.image_size = size;
  return c;
}

Point3D transform_to_camera(const Point3D& p, const CalibrationProfile& calib) {
  Eigen::Vector3d c = calib.lidar_to_cam.apply(p.vec());
  if (calib.rectification) c = *calib.rectification * c;
  return Point3D::from(c);
}

Point3D transform_to_lidar(const Point3D& p_cam, const CalibrationProfile& calib) {
  Eigen::Vector3d c = p_cam.vec();
  if (calib.rectification) c = calib.rectification->transpose() * c;
  return Point3D::from(calib.lidar_to_cam.inverse().apply(c));
}

std::optional<PixelCoord> project_to_image(const Point3D& p_cam, const CalibrationProfile& calib) {
  if (!(p_cam.z > 0.0)) return std::nullopt;
  const auto& k = calib.intrinsics;
  return PixelCoord{k.fx * p_cam.x / p_cam.z + k.cx, k.fy * p_cam.y / p_cam.z + k.cy};
}

Point3D unproject_pixel(double u, double v, double depth, const CalibrationProfile& calib) {
  if (!(depth > 0.0) || !std::isfinite(depth)) {
    throw InvalidInput("unproject_pixel: depth must be positive and finite");
  }
  const auto& k = calib.intrinsics;
  return {(u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth};
}

std::array<Point3D, 8> box_corners(const Box3D& b) {
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  std::array<Point3D, 8> out;
  for (int i = 0; i < 8; ++i) {
    const double lx = ((i & 1) ? 0.5 : -0.5) * b.l;
    const double ly = ((i & 2) ? 0.5 : -0.5) * b.w;
    const double lz = ((i & 4) ? 0.5 : -0.5) * b.h;
    out[i] = {b.x + c * lx - s * ly, b.y + s * lx + c * ly, b.z + lz};
  }
  return out;
}

std::array<Vec2, 4> bev_corners(const OrientedBoxBEV& b) {
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const double hl = 0.5 * b.l;
  const double hw = 0.5 * b.w;
  const std::array<Vec2, 4> local = {Vec2{hl, hw}, Vec2{-hl, hw}, Vec2{-hl, -hw}, Vec2{hl, -hw}};
  std::array<Vec2, 4> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = {b.x + c * local[i].x - s * local[i].y, b.y + s * local[i].x + c * local[i].y};
  }
  return out;
}

std::optional<Box2D> project_box3d_to_image_rect_unclipped(const Box3D& b, const CalibrationProfile& calib) {
  double lo_x = std::numeric_limits<double>::infinity();
  double lo_y = lo_x;
  double hi_x = -lo_x;
  double hi_y = -lo_x;
  bool any = false;
  for (const auto& corner : box_corners(b)) {
    const auto px = project_to_image(transform_to_camera(corner, calib), calib);
    if (!px) continue;
    any = true;
    lo_x = std::min(lo_x, px->x);
    hi_x = std::max(hi_x, px->x);
    lo_y = std::min(lo_y, px->y);
    hi_y = std::max(hi_y, px->y);
  }
  if (!any) return std::nullopt;
  return Box2D::from_ltrb(lo_x, lo_y, hi_x, hi_y);
}

std::optional<Box2D> project_box3d_to_image_rect(const Box3D& b, const CalibrationProfile& calib) {
  const auto hull = project_box3d_to_image_rect_unclipped(b, calib);
  if (!hull) return std::nullopt;
  const double max_x = calib.image_size.width - 1.0;
  const double max_y = calib.image_size.height - 1.0;
  const double l = std::clamp(hull->left(), 0.0, max_x);
  const double r = std::clamp(hull->right(), 0.0, max_x);
  const double t = std::clamp(hull->top(), 0.0, max_y);
  const double bt = std::clamp(hull->bottom(), 0.0, max_y);
  if (!(r > l) || !(bt > t)) return std::nullopt;
  return Box2D::from_ltrb(l, t, r, bt);
}

OrientedBoxBEV box3d_to_bev(const Box3D& b) { return {b.x, b.y, b.w, b.l, b.yaw}; }

void validate_box(const Box3D& b) {
  if (!(b.w > 0.0) || !(b.l > 0.0) || !(b.h > 0.0) || !std::isfinite(b.w) || !std::isfinite(b.l) ||
      !std::isfinite(b.h)) {
    throw InvalidInput("box size must be positive and finite");
  }
  if (!std::isfinite(b.x) || !std::isfinite(b.y) || !std::isfinite(b.z) || !std::isfinite(b.yaw)) {
    throw InvalidInput("box pose must be finite");
  }
}

bool bev_contains(const OrientedBoxBEV& b, double x, double y, double margin) {
  const double dx = x - b.x;
  const double dy = y - b.y;
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const double along = c * dx + s * dy;
  const double across = -s * dx + c * dy;
  return std::abs(along) <= 0.5 * b.l + margin && std::abs(across) <= 0.5 * b.w + margin;
}

}  // namespace mmf
