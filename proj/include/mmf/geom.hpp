#pragma once

// Frames: LiDAR x forward / y left / z up. Camera x right / y down / z forward.
// Angles are radians everywhere in the library.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>

#include <Eigen/Core>

namespace mmf {

inline constexpr double kPi = std::numbers::pi;

struct Point3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Point3D operator+(const Point3D& a, const Point3D& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Point3D operator-(const Point3D& a, const Point3D& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Point3D operator*(double s, const Point3D& p) { return {s * p.x, s * p.y, s * p.z}; }
  friend bool operator==(const Point3D&, const Point3D&) = default;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
  Eigen::Vector3d vec() const { return {x, y, z}; }
  static Point3D from(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// Continuous image position; x is the column axis, y the row axis.
struct PixelCoord {
  double x = 0.0;
  double y = 0.0;
};

/// Upright 3D box. `l` runs along the heading (local x), `w` across it (local y),
/// `h` along up. `yaw` is measured from LiDAR +x towards +y.
struct Box3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double w = 1.0;
  double l = 1.0;
  double h = 1.0;
  double yaw = 0.0;

  friend bool operator==(const Box3D&, const Box3D&) = default;
};

/// Axis-aligned image rectangle in pixels, center + size.
struct Box2D {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;

  double left() const { return x - 0.5 * w; }
  double right() const { return x + 0.5 * w; }
  double top() const { return y - 0.5 * h; }
  double bottom() const { return y + 0.5 * h; }
  static Box2D from_ltrb(double l, double t, double r, double b) {
    return {0.5 * (l + r), 0.5 * (t + b), r - l, b - t};
  }
  friend bool operator==(const Box2D&, const Box2D&) = default;
};

struct OrientedBoxBEV {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double l = 1.0;
  double yaw = 0.0;

  friend bool operator==(const OrientedBoxBEV&, const OrientedBoxBEV&) = default;
};

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

struct ImageSize {
  int height = 0;
  int width = 0;
  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  RigidTransform inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }
};

struct CalibrationProfile {
  Intrinsics intrinsics;
  RigidTransform lidar_to_cam;
  std::optional<Eigen::Matrix3d> rectification;
  ImageSize image_size{375, 1242};

  /// Throws InvalidInput when a rotation block is not a proper rotation
  /// (1e-6), a focal length is non-positive or the image size is empty.
  void validate() const;

  static CalibrationProfile identity(ImageSize size = {375, 1242});
};

/// Wraps to [-pi, pi).
double wrap_angle(double a);
/// Wraps modulo pi to [-pi/2, pi/2).
double wrap_angle_half(double a);

bool is_rotation(const Eigen::Matrix3d& r, double tol = 1e-6);

Point3D transform_to_camera(const Point3D& p, const CalibrationProfile& calib);
Point3D transform_to_lidar(const Point3D& p_cam, const CalibrationProfile& calib);

/// Pinhole projection of a camera-frame point. Empty when z <= 0.
std::optional<PixelCoord> project_to_image(const Point3D& p_cam, const CalibrationProfile& calib);

/// Inverse pinhole at the given depth. Throws InvalidInput for depth <= 0.
Point3D unproject_pixel(double u, double v, double depth, const CalibrationProfile& calib);

/// Corner i has local sign pattern (bit0: +l/2, bit1: +w/2, bit2: +h/2); cleared bit means minus.
std::array<Point3D, 8> box_corners(const Box3D& b);

/// Footprint polygon, counter-clockwise.
std::array<Vec2, 4> bev_corners(const OrientedBoxBEV& b);

/// Axis-aligned hull of the projected corners that lie in front of the camera,
/// clipped to [0, width-1] x [0, height-1]. Empty when no corner is in front or
/// the clipped hull has no area.
std::optional<Box2D> project_box3d_to_image_rect(const Box3D& b, const CalibrationProfile& calib);

/// Same hull without clipping; used for truncation bookkeeping.
std::optional<Box2D> project_box3d_to_image_rect_unclipped(const Box3D& b, const CalibrationProfile& calib);

OrientedBoxBEV box3d_to_bev(const Box3D& b);

/// Throws InvalidInput on non-positive or non-finite size.
void validate_box(const Box3D& b);

/// True when (x, y) lies inside (or on) the footprint, grown by `margin` on every side.
bool bev_contains(const OrientedBoxBEV& b, double x, double y, double margin = 0.0);

}  // namespace mmf
