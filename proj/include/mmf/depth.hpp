#pragma once

#include <span>
#include <vector>

#include "mmf/geom.hpp"
#include "mmf/tensor.hpp"

namespace mmf {

inline constexpr double kDepthNormalizer = 10.0;

/// Three channels per pixel: (x_im - u, y_im - v, z_cam / 10). Pixels without a LiDAR
/// return are zero in every channel and cleared in `occupied`.
struct SparseDepthImage {
  Tensor3<float> values;  // [3][height][width]
  std::vector<unsigned char> occupied;

  int height() const { return values.rows; }
  int width() const { return values.cols; }
  bool is_occupied(int v, int u) const { return occupied[static_cast<std::size_t>(v) * values.cols + u] != 0; }
};

/// Metric depth per pixel; a pixel is valid when its value is finite and > 0.
struct DenseDepthImage {
  int height = 0;
  int width = 0;
  std::vector<float> depth;

  float at(int v, int u) const { return depth[static_cast<std::size_t>(v) * width + u]; }
  bool valid(int v, int u) const {
    const float d = at(v, u);
    return std::isfinite(d) && d > 0.0f;
  }
  static DenseDepthImage filled(int height, int width, float value) {
    return {height, width, std::vector<float>(static_cast<std::size_t>(height) * width, value)};
  }
};

/// Nearest integer pixel of a continuous position, rounding halves away from zero.
inline int nearest_pixel(double coord) { return static_cast<int>(std::round(coord)); }

/// Project LiDAR points into a sparse depth image of calib.image_size. On collisions the
/// nearer point wins (ties: smaller x_im, then smaller y_im). Points behind the camera or
/// outside the image are dropped.
SparseDepthImage build_sparse_depth_image(std::span<const Point3D> points_lidar, const CalibrationProfile& calib);

/// Single-threaded reference of build_sparse_depth_image.
SparseDepthImage build_sparse_depth_image_serial(std::span<const Point3D> points_lidar,
                                                 const CalibrationProfile& calib);

/// Unproject every valid dense-depth pixel on a `stride` lattice (rows and cols multiple of
/// stride) whose `sparse_mask` entry is empty. Output is in the camera frame.
/// Throws ConfigError when the mask and the depth image disagree in size.
std::vector<Point3D> densify_pseudo_points(const DenseDepthImage& dense, std::span<const unsigned char> sparse_mask,
                                           const CalibrationProfile& calib, int stride = 4);

}  // namespace mmf
