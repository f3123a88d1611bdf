#pragma once

#include <array>
#include <vector>

#include "mmf/geom.hpp"
#include "mmf/tensor.hpp"

namespace mmf {

enum class OrientationAnchor : int { kA0 = 0, kA90 = 1 };

inline double anchor_angle(OrientationAnchor a) { return a == OrientationAnchor::kA0 ? 0.0 : 0.5 * kPi; }

struct AnchorAssignment {
  OrientationAnchor anchor = OrientationAnchor::kA0;
  /// Residual to the anchor, in [-pi/4, pi/4).
  double residual = 0.0;
  /// anchor angle + residual, in [-pi/4, 3pi/4); congruent to the box yaw modulo pi.
  double canonical() const { return anchor_angle(anchor) + residual; }
};

/// Nearest of the 0 / 90 degree anchors for a yaw taken modulo pi. Half-open bands:
/// A0 covers [-pi/4, pi/4), A90 covers [pi/4, 3pi/4).
AnchorAssignment assign_orientation_anchor(double yaw);

struct OrientedROI {
  OrientedBoxBEV box;
  int grid_n = 5;

  AnchorAssignment anchor() const { return assign_orientation_anchor(box.yaw); }
};

/// [C][n][n] samples. Index a runs across the box (width axis), b along it (length axis);
/// for axis-aligned image ROIs a is the row and b the column.
struct ROIFeature {
  Tensor3<double> values;
  /// Per lattice point (a * n + b): the four map taps used by every channel.
  std::vector<std::array<Tap, 4>> taps;
  int map_rows = 0;
  int map_cols = 0;

  /// Map-value gradient ([C][rows][cols]) of a scalar loss with d(loss)/d(values) = upstream.
  Tensor3<double> backward(const Tensor3<double>& upstream) const;
};

/// Metric lattice points of an oriented ROI, [n*n] in (a, b) order. The frame follows the
/// anchor-canonical orientation, so the ordering is continuous in yaw inside each band.
std::vector<Vec2> oriented_roi_lattice(const OrientedROI& roi);

/// Bilinear clamp-to-edge samples of a BEV map on the ROI lattice.
/// Throws InvalidInput for degenerate boxes, grid_n < 1 or a center outside the map.
template <class T>
ROIFeature extract_oriented_roi(const GridView<T>& map, double stride, double origin_x, double origin_y,
                                const OrientedROI& roi);

ROIFeature extract_oriented_roi(const FeatureMap& bev, const OrientedROI& roi);

/// ROIAlign-style single-sample-per-bin extraction on an image map; `rect` is in source pixels.
template <class T>
ROIFeature extract_axis_aligned_roi(const GridView<T>& map, double stride, const Box2D& rect, int grid_n);

ROIFeature extract_axis_aligned_roi(const FeatureMap& image, const Box2D& rect, int grid_n = 5);

using RefinementOffsets = std::array<double, 7>;  // dx', dy', dz, dlog w, dlog l, dlog h, dyaw

/// Target-minus-detection offsets, with the center offset rotated into the detection's
/// anchor-canonical frame (x' along the length axis). dyaw is wrapped to [-pi/2, pi/2).
RefinementOffsets encode_refinement_offsets(const Box3D& detection, const Box3D& target);

/// Inverse of encode_refinement_offsets. The decoded yaw equals the target's modulo pi.
Box3D decode_refinement_offsets(const Box3D& detection, const RefinementOffsets& offsets);

}  // namespace mmf
