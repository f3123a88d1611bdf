#include "mmf/depth.hpp"

#include <cmath>
#include <cstdint>
#include <tuple>

#include "mmf/errors.hpp"

namespace mmf {
namespace {

struct Hit {
  std::int64_t pixel = -1;
  double x_im = 0.0;
  double y_im = 0.0;
  double z_cam = 0.0;
};

Hit project_one(const Point3D& p, const CalibrationProfile& calib) {
  const Point3D c = transform_to_camera(p, calib);
  const auto px = project_to_image(c, calib);
  if (!px || !std::isfinite(px->x) || !std::isfinite(px->y)) return {};
  const double u = std::round(px->x);
  const double v = std::round(px->y);
  if (u < 0.0 || v < 0.0 || u >= calib.image_size.width || v >= calib.image_size.height) return {};
  return {static_cast<std::int64_t>(v) * calib.image_size.width + static_cast<std::int64_t>(u), px->x, px->y, c.z};
}

bool nearer(const Hit& a, const Hit& b) {
  return std::tie(a.z_cam, a.x_im, a.y_im) < std::tie(b.z_cam, b.x_im, b.y_im);
}

SparseDepthImage render(const std::vector<Hit>& hits, const CalibrationProfile& calib) {
  const int h = calib.image_size.height;
  const int w = calib.image_size.width;
  const std::size_t pixels = static_cast<std::size_t>(h) * w;
  std::vector<Hit> best(pixels);
  for (const auto& hit : hits) {
    if (hit.pixel < 0) continue;
    auto& slot = best[hit.pixel];
    if (slot.pixel < 0 || nearer(hit, slot)) slot = hit;
  }
  SparseDepthImage img{Tensor3<float>(3, h, w), std::vector<unsigned char>(pixels, 0)};
  for (std::size_t i = 0; i < pixels; ++i) {
    const auto& hit = best[i];
    if (hit.pixel < 0) continue;
    const double u = static_cast<double>(i % w);
    const double v = static_cast<double>(i / w);
    img.occupied[i] = 1;
    img.values.data[i] = static_cast<float>(hit.x_im - u);
    img.values.data[pixels + i] = static_cast<float>(hit.y_im - v);
    img.values.data[2 * pixels + i] = static_cast<float>(hit.z_cam / kDepthNormalizer);
  }
  return img;
}

}  // namespace

SparseDepthImage build_sparse_depth_image_serial(std::span<const Point3D> points_lidar,
                                                 const CalibrationProfile& calib) {
  calib.validate();
  std::vector<Hit> hits(points_lidar.size());
  for (std::size_t i = 0; i < points_lidar.size(); ++i) hits[i] = project_one(points_lidar[i], calib);
  return render(hits, calib);
}

SparseDepthImage build_sparse_depth_image(std::span<const Point3D> points_lidar, const CalibrationProfile& calib) {
  calib.validate();
  const std::int64_t n = static_cast<std::int64_t>(points_lidar.size());
  std::vector<Hit> hits(points_lidar.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) hits[i] = project_one(points_lidar[i], calib);
  // The keep-nearest rule is a total order, so the serial scatter is order independent.
  return render(hits, calib);
}

std::vector<Point3D> densify_pseudo_points(const DenseDepthImage& dense, std::span<const unsigned char> sparse_mask,
                                           const CalibrationProfile& calib, int stride) {
  if (stride <= 0) throw ConfigError("densify_pseudo_points: stride must be positive");
  const std::size_t pixels = static_cast<std::size_t>(dense.height) * dense.width;
  if (dense.depth.size() != pixels || sparse_mask.size() != pixels) {
    throw ConfigError("densify_pseudo_points: depth image and occupancy mask resolution differ");
  }
  std::vector<Point3D> out;
  for (int v = 0; v < dense.height; v += stride) {
    for (int u = 0; u < dense.width; u += stride) {
      const std::size_t i = static_cast<std::size_t>(v) * dense.width + u;
      if (sparse_mask[i] || !dense.valid(v, u)) continue;
      out.push_back(unproject_pixel(u, v, dense.depth[i], calib));
    }
  }
  return out;
}

}  // namespace mmf
