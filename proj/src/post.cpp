#include "mmf/post.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmf/errors.hpp"

namespace mmf {
namespace {

constexpr double kEdgeGuard = 1e-12;

// Signed distance of p from the directed line a->b, positive on the left.
double side(const Vec2& a, const Vec2& b, const Vec2& p, double inv_len) {
  return ((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)) * inv_len;
}

bool valid_footprint(const OrientedBoxBEV& b) {
  return b.w > 0.0 && b.l > 0.0 && std::isfinite(b.w) && std::isfinite(b.l) && std::isfinite(b.x) &&
         std::isfinite(b.y) && std::isfinite(b.yaw);
}

}  // namespace

double polygon_area(std::span<const Vec2> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    acc += p.x * q.y - q.x * p.y;
  }
  return 0.5 * acc;
}

std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip) {
  std::vector<Vec2> poly(subject.begin(), subject.end());
  std::vector<Vec2> next;
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !poly.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % m];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    if (len == 0.0) continue;
    const double inv = 1.0 / len;
    next.clear();
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2& p = poly[i];
      const Vec2& q = poly[(i + 1) % n];
      double dp = side(a, b, p, inv);
      double dq = side(a, b, q, inv);
      if (std::abs(dp) <= kEdgeGuard) dp = 0.0;
      if (std::abs(dq) <= kEdgeGuard) dq = 0.0;
      if (dp >= 0.0) next.push_back(p);
      if ((dp > 0.0 && dq < 0.0) || (dp < 0.0 && dq > 0.0)) {
        const double t = dp / (dp - dq);
        next.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
      }
    }
    poly.swap(next);
  }
  return poly;
}

double bev_intersection_area(const OrientedBoxBEV& a, const OrientedBoxBEV& b) {
  if (!valid_footprint(a) || !valid_footprint(b)) return 0.0;
  // Cheap reject on bounding circles.
  const double ra = 0.5 * std::hypot(a.w, a.l);
  const double rb = 0.5 * std::hypot(b.w, b.l);
  if (std::hypot(a.x - b.x, a.y - b.y) > ra + rb) return 0.0;
  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  const auto poly = clip_convex(ca, cb);
  return std::max(0.0, polygon_area(poly));
}

double rotated_iou_bev(const OrientedBoxBEV& a, const OrientedBoxBEV& b) {
  if (!valid_footprint(a) || !valid_footprint(b)) return 0.0;
  const double inter = bev_intersection_area(a, b);
  const double uni = a.w * a.l + b.w * b.l - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  if (!(a.h > 0.0) || !(b.h > 0.0)) return 0.0;
  const auto ba = box3d_to_bev(a);
  const auto bb = box3d_to_bev(b);
  if (!valid_footprint(ba) || !valid_footprint(bb)) return 0.0;
  const double overlap_z = std::min(a.z + 0.5 * a.h, b.z + 0.5 * b.h) - std::max(a.z - 0.5 * a.h, b.z - 0.5 * b.h);
  if (!(overlap_z > 0.0)) return 0.0;
  const double inter = bev_intersection_area(ba, bb) * overlap_z;
  const double uni = a.w * a.l * a.h + b.w * b.l * b.h - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_2d(const Box2D& a, const Box2D& b) {
  if (!(a.w > 0.0) || !(a.h > 0.0) || !(b.w > 0.0) || !(b.h > 0.0)) return 0.0;
  const double iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
  if (!(iw > 0.0) || !(ih > 0.0)) return 0.0;
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<double> iou_matrix_bev_serial(std::span<const OrientedBoxBEV> a, std::span<const OrientedBoxBEV> b) {
  std::vector<double> m(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) m[i * b.size() + j] = rotated_iou_bev(a[i], b[j]);
  }
  return m;
}

std::vector<double> iou_matrix_bev(std::span<const OrientedBoxBEV> a, std::span<const OrientedBoxBEV> b) {
  std::vector<double> m(a.size() * b.size());
  const std::int64_t rows = static_cast<std::int64_t>(a.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) m[i * b.size() + j] = rotated_iou_bev(a[i], b[j]);
  }
  return m;
}

DetectionSet oriented_nms(std::span<const Detection> dets, const NmsOptions& opts) {
  if (!(opts.score_threshold >= 0.0 && opts.score_threshold <= 1.0) ||
      !(opts.iou_threshold >= 0.0 && opts.iou_threshold <= 1.0)) {
    throw InvalidInput("oriented_nms: thresholds must lie in [0, 1]");
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].score >= opts.score_threshold) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  std::vector<OrientedBoxBEV> bev(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) bev[k] = box3d_to_bev(dets[order[k]].box);

  const std::int64_t n = static_cast<std::int64_t>(order.size());
  std::vector<unsigned char> suppressed(order.size(), 0);
  DetectionSet kept;
  for (std::int64_t i = 0; i < n; ++i) {
    if (suppressed[i]) continue;
    const Detection& keep = dets[order[i]];
    kept.push_back(keep);
#pragma omp parallel for schedule(static) if (n - i > 256)
    for (std::int64_t j = i + 1; j < n; ++j) {
      if (suppressed[j] || dets[order[j]].class_id != keep.class_id) continue;
      if (rotated_iou_bev(bev[i], bev[j]) >= opts.iou_threshold) suppressed[j] = 1;
    }
  }
  return kept;
}

}  // namespace mmf
