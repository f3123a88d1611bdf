#include "mmf/heads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mmf/errors.hpp"

namespace mmf {

TargetAssignment assign_targets(std::span<const Box3D> gt, const VoxelGridConfig& cfg, double ignore_margin) {
  cfg.validate();
  if (!(ignore_margin >= 0.0)) throw InvalidInput("assign_targets: ignore margin must be non-negative");
  const std::size_t cells = static_cast<std::size_t>(cfg.nx) * cfg.ny;
  TargetAssignment t{cfg.ny, cfg.nx, std::vector<CellLabel>(cells, CellLabel::kNegative), std::vector<int>(cells, -1)};
  std::vector<double> best_d2(cells, std::numeric_limits<double>::infinity());
  const double ex = cfg.edge_x();
  const double ey = cfg.edge_y();

  for (std::size_t k = 0; k < gt.size(); ++k) {
    const auto bev = box3d_to_bev(gt[k]);
    const auto corners = bev_corners(bev);
    double lo_x = corners[0].x, hi_x = corners[0].x, lo_y = corners[0].y, hi_y = corners[0].y;
    for (const auto& c : corners) {
      lo_x = std::min(lo_x, c.x);
      hi_x = std::max(hi_x, c.x);
      lo_y = std::min(lo_y, c.y);
      hi_y = std::max(hi_y, c.y);
    }
    lo_x -= ignore_margin * std::sqrt(2.0);
    lo_y -= ignore_margin * std::sqrt(2.0);
    hi_x += ignore_margin * std::sqrt(2.0);
    hi_y += ignore_margin * std::sqrt(2.0);
    const int ix0 = std::max(0, static_cast<int>(std::floor((lo_x - cfg.x.min) / ex)) - 1);
    const int ix1 = std::min(cfg.nx - 1, static_cast<int>(std::floor((hi_x - cfg.x.min) / ex)) + 1);
    const int iy0 = std::max(0, static_cast<int>(std::floor((lo_y - cfg.y.min) / ey)) - 1);
    const int iy1 = std::min(cfg.ny - 1, static_cast<int>(std::floor((hi_y - cfg.y.min) / ey)) + 1);
    for (int iy = iy0; iy <= iy1; ++iy) {
      for (int ix = ix0; ix <= ix1; ++ix) {
        const Vec2 c = cfg.cell_center(ix, iy);
        const std::size_t i = static_cast<std::size_t>(iy) * cfg.nx + ix;
        if (bev_contains(bev, c.x, c.y)) {
          const double d2 = (c.x - bev.x) * (c.x - bev.x) + (c.y - bev.y) * (c.y - bev.y);
          if (t.labels[i] != CellLabel::kPositive || d2 < best_d2[i] ||
              (d2 == best_d2[i] && static_cast<int>(k) < t.gt_index[i])) {
            t.labels[i] = CellLabel::kPositive;
            t.gt_index[i] = static_cast<int>(k);
            best_d2[i] = d2;
          }
        } else if (t.labels[i] == CellLabel::kNegative && bev_contains(bev, c.x, c.y, ignore_margin)) {
          t.labels[i] = CellLabel::kIgnore;
        }
      }
    }
  }
  return t;
}

BoxEncoding3D encode_box3d(const Box3D& b, Vec2 cell_center) {
  validate_box(b);
  return {b.x - cell_center.x, b.y - cell_center.y, b.z, std::log(b.w), std::log(b.l), std::log(b.h), b.yaw};
}

Box3D decode_box3d(const BoxEncoding3D& e, Vec2 cell_center) {
  return {e[0] + cell_center.x, e[1] + cell_center.y, e[2], std::exp(e[3]), std::exp(e[4]), std::exp(e[5]), e[6]};
}

BoxEncoding2D encode_box2d(const Box2D& b, PixelCoord reference) {
  if (!(b.w > 0.0) || !(b.h > 0.0)) throw InvalidInput("encode_box2d: size must be positive");
  return {b.x - reference.x, b.y - reference.y, std::log(b.w), std::log(b.h)};
}

Box2D decode_box2d(const BoxEncoding2D& e, PixelCoord reference) {
  return {e[0] + reference.x, e[1] + reference.y, std::exp(e[2]), std::exp(e[3])};
}

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double smooth_l1_grad(double x) {
  if (x >= 1.0) return 1.0;
  if (x <= -1.0) return -1.0;
  return x;
}

double bce_loss(double p, int y) {
  if (y != 0 && y != 1) throw InvalidInput("bce_loss: label must be 0 or 1");
  const double q = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return y == 1 ? -std::log(q) : -std::log1p(-q);
}

double depth_l2(const DenseDepthImage& pred, const DenseDepthImage& gt) {
  if (pred.height != gt.height || pred.width != gt.width || pred.depth.size() != gt.depth.size() ||
      gt.depth.size() != static_cast<std::size_t>(gt.height) * gt.width) {
    throw ConfigError("depth_l2: resolution mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < gt.depth.size(); ++i) {
    const float g = gt.depth[i];
    if (!(std::isfinite(g) && g > 0.0f)) continue;
    const double d = static_cast<double>(pred.depth[i]) - g;
    acc += d * d;
  }
  return acc;
}

double box3d_regression_loss(const BoxEncoding3D& pred, const BoxEncoding3D& target) {
  double acc = 0.0;
  for (int i = 0; i < 6; ++i) acc += smooth_l1(pred[i] - target[i]);
  return acc + smooth_l1(wrap_angle_half(pred[6] - target[6]));
}

double box2d_regression_loss(const BoxEncoding2D& pred, const BoxEncoding2D& target) {
  double acc = 0.0;
  for (int i = 0; i < 4; ++i) acc += smooth_l1(pred[i] - target[i]);
  return acc;
}

double total_loss(double cls, double box, double r2d, double r3d, double depth, const LossWeights& w) {
  return cls + w.lambda * (box + r2d + r3d) + w.gamma * depth;
}

FirstStageLoss first_stage_loss(std::span<const double> probabilities, std::span<const BoxEncoding3D> predictions,
                                const TargetAssignment& targets, std::span<const Box3D> gt,
                                const VoxelGridConfig& cfg) {
  const std::size_t cells = targets.labels.size();
  if (probabilities.size() != cells || predictions.size() != cells ||
      cells != static_cast<std::size_t>(cfg.nx) * cfg.ny) {
    throw ConfigError("first_stage_loss: dense outputs do not match the target grid");
  }
  FirstStageLoss out;
  double cls = 0.0;
  double box = 0.0;
  for (std::size_t i = 0; i < cells; ++i) {
    const auto label = targets.labels[i];
    if (label == CellLabel::kIgnore) continue;
    const bool pos = label == CellLabel::kPositive;
    cls += bce_loss(probabilities[i], pos ? 1 : 0);
    if (pos) {
      ++out.positives;
      const int ix = static_cast<int>(i % cfg.nx);
      const int iy = static_cast<int>(i / cfg.nx);
      const auto target = encode_box3d(gt[targets.gt_index[i]], cfg.cell_center(ix, iy));
      box += box3d_regression_loss(predictions[i], target);
    } else {
      ++out.negatives;
    }
  }
  const std::size_t counted = out.positives + out.negatives;
  out.cls = counted ? cls / counted : 0.0;
  out.box = out.positives ? box / out.positives : 0.0;
  return out;
}

}  // namespace mmf
