#pragma once

#include <array>
#include <span>
#include <vector>

#include "mmf/depth.hpp"
#include "mmf/geom.hpp"
#include "mmf/voxel.hpp"

namespace mmf {

// ---------------------------------------------------------------------------
// Dense target assignment
// ---------------------------------------------------------------------------

enum class CellLabel : unsigned char { kNegative = 0, kPositive = 1, kIgnore = 2 };

struct TargetAssignment {
  int rows = 0;
  int cols = 0;
  std::vector<CellLabel> labels;  // [ny][nx]
  std::vector<int> gt_index;      // matched box for positives, -1 otherwise

  CellLabel label(int iy, int ix) const { return labels[static_cast<std::size_t>(iy) * cols + ix]; }
  int match(int iy, int ix) const { return gt_index[static_cast<std::size_t>(iy) * cols + ix]; }
};

/// Positive when the cell center is inside a GT footprint (matched to the containing box
/// with the nearest center, then the lowest index); ignore when inside a footprint grown by
/// `ignore_margin` on every side; negative otherwise.
TargetAssignment assign_targets(std::span<const Box3D> gt, const VoxelGridConfig& cfg, double ignore_margin = 0.3);

// ---------------------------------------------------------------------------
// Box codecs
// ---------------------------------------------------------------------------

/// (x - cell_x, y - cell_y, z, log w, log l, log h, yaw)
using BoxEncoding3D = std::array<double, 7>;
/// (x - ref_x, y - ref_y, log w, log h)
using BoxEncoding2D = std::array<double, 4>;

BoxEncoding3D encode_box3d(const Box3D& b, Vec2 cell_center);
Box3D decode_box3d(const BoxEncoding3D& e, Vec2 cell_center);
BoxEncoding2D encode_box2d(const Box2D& b, PixelCoord reference);
Box2D decode_box2d(const BoxEncoding2D& e, PixelCoord reference);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

inline constexpr double kProbabilityClamp = 1e-7;

double smooth_l1(double x);
double smooth_l1_grad(double x);

/// Binary cross entropy with p clamped to [1e-7, 1 - 1e-7]; y must be 0 or 1.
double bce_loss(double p, int y);

/// Sum of squared differences over pixels valid in `gt`. Throws ConfigError on size mismatch.
double depth_l2(const DenseDepthImage& pred, const DenseDepthImage& gt);

/// Sum of per-dimension smooth-L1 residuals. The yaw residual (index 6) is taken modulo pi,
/// wrapped to [-pi/2, pi/2).
double box3d_regression_loss(const BoxEncoding3D& pred, const BoxEncoding3D& target);
double box2d_regression_loss(const BoxEncoding2D& pred, const BoxEncoding2D& target);

struct LossWeights {
  double lambda = 1.0;
  double gamma = 1.0;
};

/// cls + lambda * (box + r2d + r3d) + gamma * depth
double total_loss(double cls, double box, double r2d, double r3d, double depth, const LossWeights& w);

struct FirstStageLoss {
  double cls = 0.0;  // mean BCE over non-ignored cells
  double box = 0.0;  // mean regression loss over positive cells
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// Dense first-stage terms from per-cell probabilities and encodings ([ny*nx] each).
FirstStageLoss first_stage_loss(std::span<const double> probabilities, std::span<const BoxEncoding3D> predictions,
                                const TargetAssignment& targets, std::span<const Box3D> gt,
                                const VoxelGridConfig& cfg);

}  // namespace mmf
