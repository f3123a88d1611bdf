#include "mmf/features.hpp"

#include <algorithm>
#include <cmath>

#include "mmf/errors.hpp"

namespace mmf {

FeatureMap stub_image_feature_map(std::span<const LidarPoint> points, const CalibrationProfile& calib,
                                  const DenseDepthImage* dense_depth, int stride, int channels) {
  if (stride < 1 || channels < 2) throw InvalidInput("image stub: stride >= 1 and channels >= 2 required");
  const int H = calib.image_size.height;
  const int W = calib.image_size.width;
  if (dense_depth && (dense_depth->height != H || dense_depth->width != W)) {
    throw ConfigError("image stub: depth image size disagrees with calibration");
  }
  const int rows = (H + stride - 1) / stride;
  const int cols = (W + stride - 1) / stride;
  FeatureMap m{Tensor3<float>(channels, rows, cols), static_cast<double>(stride), 0.0, 0.0};

  std::vector<double> splat(static_cast<std::size_t>(rows) * cols, 0.0);
  for (const auto& p : points) {
    const auto px = project_to_image(transform_to_camera(p.p, calib), calib);
    if (!px) continue;
    const int u = nearest_pixel(px->x);
    const int v = nearest_pixel(px->y);
    if (u < 0 || u >= W || v < 0 || v >= H) continue;
    splat[static_cast<std::size_t>(v / stride) * cols + u / stride] += p.intensity;
  }
  const double inv_area = 1.0 / (static_cast<double>(stride) * stride);

#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const double v = (r + 0.5) * stride - 0.5;
    const int vi = std::clamp(nearest_pixel(v), 0, H - 1);
    for (int c = 0; c < cols; ++c) {
      const double u = (c + 0.5) * stride - 0.5;
      const int ui = std::clamp(nearest_pixel(u), 0, W - 1);
      double depth = 0.0;
      if (dense_depth && dense_depth->valid(vi, ui)) depth = dense_depth->at(vi, ui) / 10.0;
      m.values.at(0, r, c) = static_cast<float>(depth);
      m.values.at(1, r, c) = static_cast<float>(splat[static_cast<std::size_t>(r) * cols + c] * inv_area);
      for (int k = 2; k < channels; ++k) {
        const double lambda = 32.0 * k;
        m.values.at(k, r, c) = static_cast<float>(std::sin(2.0 * kPi * u / lambda) * std::cos(2.0 * kPi * v / lambda));
      }
    }
  }
  return m;
}

std::array<FeatureMap, 4> stub_image_feature_maps(std::span<const LidarPoint> points, const CalibrationProfile& calib,
                                                  const DenseDepthImage* dense_depth, int channels) {
  std::array<FeatureMap, 4> out;
  for (std::size_t i = 0; i < kImageStrides.size(); ++i) {
    out[i] = stub_image_feature_map(points, calib, dense_depth, kImageStrides[i], channels);
  }
  return out;
}

FeatureMap stub_bev_feature_map(const BevTensor& t, int channels) {
  if (channels < 2) throw InvalidInput("BEV stub: channels >= 2 required");
  const auto& g = t.grid;
  if (std::abs(g.edge_x() - g.edge_y()) > 1e-12 * g.edge_x()) {
    throw ConfigError("BEV stub: x and y voxel edges must be equal");
  }
  FeatureMap m{Tensor3<float>(channels, g.ny, g.nx), g.edge_x(), g.x.min, g.y.min};
  const int nz = t.values.channels;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < g.ny; ++r) {
    for (int c = 0; c < g.nx; ++c) {
      double mass = 0.0;
      double height = 0.0;
      for (int z = 0; z < nz; ++z) {
        const double v = t.values.at(z, r, c);
        mass += v;
        height += (z + 0.5) / nz * v;
      }
      m.values.at(0, r, c) = static_cast<float>(mass);
      m.values.at(1, r, c) = static_cast<float>(height);
      const Vec2 ctr = g.cell_center(c, r);
      for (int k = 2; k < channels; ++k) {
        const double mu = 4.0 * k;
        m.values.at(k, r, c) = static_cast<float>(std::sin(2.0 * kPi * ctr.x / mu) * std::cos(2.0 * kPi * ctr.y / mu));
      }
    }
  }
  return m;
}

}  // namespace mmf
