#include "mmf/roi.hpp"

#include <cmath>

#include "mmf/errors.hpp"

namespace mmf {

AnchorAssignment assign_orientation_anchor(double yaw) {
  if (!std::isfinite(yaw)) throw InvalidInput("assign_orientation_anchor: non-finite yaw");
  // Canonical orientation in [-pi/4, 3pi/4).
  double phi = std::fmod(yaw + 0.25 * kPi, kPi);
  if (phi < 0.0) phi += kPi;
  if (phi >= kPi) phi -= kPi;
  phi -= 0.25 * kPi;
  AnchorAssignment a;
  if (phi < 0.25 * kPi) {
    a.anchor = OrientationAnchor::kA0;
    a.residual = phi;
  } else {
    a.anchor = OrientationAnchor::kA90;
    a.residual = phi - 0.5 * kPi;
    if (a.residual >= 0.25 * kPi) a.residual = std::nextafter(0.25 * kPi, 0.0);
  }
  return a;
}

std::vector<Vec2> oriented_roi_lattice(const OrientedROI& roi) {
  const int n = roi.grid_n;
  const double psi = roi.anchor().canonical();
  const double c = std::cos(psi);
  const double s = std::sin(psi);
  std::vector<Vec2> pts(static_cast<std::size_t>(n) * n);
  for (int a = 0; a < n; ++a) {
    const double across = -0.5 * roi.box.w + (a + 0.5) * roi.box.w / n;
    for (int b = 0; b < n; ++b) {
      const double along = -0.5 * roi.box.l + (b + 0.5) * roi.box.l / n;
      pts[static_cast<std::size_t>(a) * n + b] = {roi.box.x + c * along - s * across,
                                                  roi.box.y + s * along + c * across};
    }
  }
  return pts;
}

namespace {

template <class T>
ROIFeature sample_lattice(const GridView<T>& map, int n, const std::vector<Vec2>& cells) {
  ROIFeature f;
  f.values = Tensor3<double>(map.channels, n, n);
  f.map_rows = map.rows;
  f.map_cols = map.cols;
  f.taps.resize(cells.size());
  for (std::size_t k = 0; k < cells.size(); ++k) {
    // cells hold (col, row)
    f.taps[k] = bilinear_taps(map.rows, map.cols, cells[k].y, cells[k].x);
  }
  const std::size_t plane = map.plane();
  for (int ch = 0; ch < map.channels; ++ch) {
    const std::size_t base = ch * plane;
    for (std::size_t k = 0; k < cells.size(); ++k) {
      double v = 0.0;
      for (const auto& t : f.taps[k]) v += t.weight * static_cast<double>(map.data[base + t.offset]);
      f.values.data[ch * cells.size() + k] = v;
    }
  }
  return f;
}

template <class T>
void check_map(const GridView<T>& map) {
  if (map.channels <= 0 || map.rows <= 0 || map.cols <= 0) throw InvalidInput("ROI extraction: empty map");
}

}  // namespace

Tensor3<double> ROIFeature::backward(const Tensor3<double>& upstream) const {
  if (!upstream.same_shape(values)) throw ConfigError("ROIFeature::backward: upstream shape mismatch");
  Tensor3<double> grad(values.channels, map_rows, map_cols);
  const std::size_t plane = grad.plane();
  const std::size_t samples = taps.size();
  for (int ch = 0; ch < values.channels; ++ch) {
    for (std::size_t k = 0; k < samples; ++k) {
      const double g = upstream.data[ch * samples + k];
      for (const auto& t : taps[k]) grad.data[ch * plane + t.offset] += t.weight * g;
    }
  }
  return grad;
}

template <class T>
ROIFeature extract_oriented_roi(const GridView<T>& map, double stride, double origin_x, double origin_y,
                                const OrientedROI& roi) {
  check_map(map);
  if (!(roi.box.w > 0.0) || !(roi.box.l > 0.0) || !std::isfinite(roi.box.w) || !std::isfinite(roi.box.l)) {
    throw InvalidInput("extract_oriented_roi: degenerate box");
  }
  if (roi.grid_n < 1) throw InvalidInput("extract_oriented_roi: grid_n must be >= 1");
  if (!(stride > 0.0)) throw InvalidInput("extract_oriented_roi: stride must be positive");
  const double cx = (roi.box.x - origin_x) / stride;
  const double cy = (roi.box.y - origin_y) / stride;
  if (!(cx >= 0.0 && cx < map.cols && cy >= 0.0 && cy < map.rows)) {
    throw InvalidInput("extract_oriented_roi: ROI center outside the map");
  }
  auto pts = oriented_roi_lattice(roi);
  for (auto& p : pts) p = {(p.x - origin_x) / stride - 0.5, (p.y - origin_y) / stride - 0.5};
  return sample_lattice(map, roi.grid_n, pts);
}

ROIFeature extract_oriented_roi(const FeatureMap& bev, const OrientedROI& roi) {
  return extract_oriented_roi(bev.values.view(), bev.stride, bev.origin_x, bev.origin_y, roi);
}

template <class T>
ROIFeature extract_axis_aligned_roi(const GridView<T>& map, double stride, const Box2D& rect, int grid_n) {
  check_map(map);
  if (!(rect.w > 0.0) || !(rect.h > 0.0) || !std::isfinite(rect.w) || !std::isfinite(rect.h)) {
    throw InvalidInput("extract_axis_aligned_roi: degenerate rect");
  }
  if (grid_n < 1) throw InvalidInput("extract_axis_aligned_roi: grid_n must be >= 1");
  if (!(stride > 0.0)) throw InvalidInput("extract_axis_aligned_roi: stride must be positive");
  const int n = grid_n;
  std::vector<Vec2> pts(static_cast<std::size_t>(n) * n);
  for (int a = 0; a < n; ++a) {
    const double py = rect.top() + (a + 0.5) * rect.h / n;
    for (int b = 0; b < n; ++b) {
      const double px = rect.left() + (b + 0.5) * rect.w / n;
      pts[static_cast<std::size_t>(a) * n + b] = {(px + 0.5) / stride - 0.5, (py + 0.5) / stride - 0.5};
    }
  }
  return sample_lattice(map, n, pts);
}

ROIFeature extract_axis_aligned_roi(const FeatureMap& image, const Box2D& rect, int grid_n) {
  return extract_axis_aligned_roi(image.values.view(), image.stride, rect, grid_n);
}

template ROIFeature extract_oriented_roi<float>(const GridView<float>&, double, double, double, const OrientedROI&);
template ROIFeature extract_oriented_roi<double>(const GridView<double>&, double, double, double, const OrientedROI&);
template ROIFeature extract_axis_aligned_roi<float>(const GridView<float>&, double, const Box2D&, int);
template ROIFeature extract_axis_aligned_roi<double>(const GridView<double>&, double, const Box2D&, int);

RefinementOffsets encode_refinement_offsets(const Box3D& detection, const Box3D& target) {
  validate_box(detection);
  validate_box(target);
  const double psi = assign_orientation_anchor(detection.yaw).canonical();
  const double dx = target.x - detection.x;
  const double dy = target.y - detection.y;
  const double c = std::cos(psi);
  const double s = std::sin(psi);
  return {c * dx + s * dy,
          -s * dx + c * dy,
          target.z - detection.z,
          std::log(target.w / detection.w),
          std::log(target.l / detection.l),
          std::log(target.h / detection.h),
          wrap_angle_half(target.yaw - detection.yaw)};
}

Box3D decode_refinement_offsets(const Box3D& detection, const RefinementOffsets& o) {
  const double psi = assign_orientation_anchor(detection.yaw).canonical();
  const double c = std::cos(psi);
  const double s = std::sin(psi);
  Box3D t;
  t.x = detection.x + c * o[0] - s * o[1];
  t.y = detection.y + s * o[0] + c * o[1];
  t.z = detection.z + o[2];
  t.w = detection.w * std::exp(o[3]);
  t.l = detection.l * std::exp(o[4]);
  t.h = detection.h * std::exp(o[5]);
  t.yaw = wrap_angle(detection.yaw + o[6]);
  return t;
}

}  // namespace mmf
