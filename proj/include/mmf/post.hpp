#pragma once

#include <span>
#include <vector>

#include "mmf/geom.hpp"

namespace mmf {

struct Detection {
  Box3D box;
  double score = 0.0;
  int class_id = 0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Detections ordered by non-increasing score once they have been through NMS.
using DetectionSet = std::vector<Detection>;

/// Area of a simple polygon (shoelace); positive for counter-clockwise order.
double polygon_area(std::span<const Vec2> poly);

/// Intersection of two convex counter-clockwise polygons (Sutherland-Hodgman).
/// Vertices within 1e-12 of a clip edge count as on the edge.
std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip);

/// Exact footprint overlap area of two oriented boxes.
double bev_intersection_area(const OrientedBoxBEV& a, const OrientedBoxBEV& b);

/// Intersection over union in [0, 1]; 0 when either box has zero area.
double rotated_iou_bev(const OrientedBoxBEV& a, const OrientedBoxBEV& b);
double iou_3d(const Box3D& a, const Box3D& b);
double iou_2d(const Box2D& a, const Box2D& b);

/// Row-major |a| x |b| matrix of BEV IoUs.
std::vector<double> iou_matrix_bev(std::span<const OrientedBoxBEV> a, std::span<const OrientedBoxBEV> b);
std::vector<double> iou_matrix_bev_serial(std::span<const OrientedBoxBEV> a, std::span<const OrientedBoxBEV> b);

struct NmsOptions {
  double score_threshold = 0.2;
  double iou_threshold = 0.5;
};

/// Drop detections scoring below the threshold, then greedily keep the best remaining
/// detection and suppress same-class detections whose BEV IoU with it is >= iou_threshold.
/// Equal scores keep input order.
DetectionSet oriented_nms(std::span<const Detection> dets, const NmsOptions& opts = {});

}  // namespace mmf
