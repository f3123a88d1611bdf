#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mmf/geom.hpp"
#include "mmf/tensor.hpp"
#include "mmf/voxel.hpp"

namespace mmf {

// ---------------------------------------------------------------------------
// Multi-scale image features
// ---------------------------------------------------------------------------

/// Bilinearly upsample every map onto the grid of `maps[0]` (the finest stride) and sum
/// them element-wise. Cell centers are aligned through source pixel coordinates:
/// pixel = (cell + 0.5) * stride - 0.5. Sampling is clamp-to-edge.
/// Throws ConfigError on channel mismatch or when maps[0] is not the finest map.
FeatureMap aggregate_multiscale(std::span<const FeatureMap> maps);

// ---------------------------------------------------------------------------
// BEV <-> image correspondences
// ---------------------------------------------------------------------------

enum class PointSource : std::uint8_t { kTrueLidar, kPseudo };

enum class GeometricFeatureMode : std::uint8_t {
  kOffset,  // (dx, dy, dz) from the BEV cell center (z = 0) to the matched point
  kScalar,  // (|offset|, 0, 0)
};

struct Correspondence {
  PointSource source = PointSource::kTrueLidar;
  /// Continuous position in image feature-map cells, clamped to the sampleable interior.
  double row = 0.0;
  double col = 0.0;
  std::array<double, 3> geometric{};
  /// Index into the canonically sorted (x, y, z) point set of `source`.
  std::uint32_t point_index = 0;

  friend bool operator==(const Correspondence&, const Correspondence&) = default;
};

/// One optional record per BEV cell, [ny][nx].
struct CorrespondenceMap {
  int rows = 0;
  int cols = 0;
  std::vector<std::optional<Correspondence>> cells;

  const std::optional<Correspondence>& at(int row, int col) const {
    return cells[static_cast<std::size_t>(row) * cols + col];
  }
  std::size_t matched() const;
};

struct ImageMapShape {
  int rows = 0;
  int cols = 0;
  double stride = 4.0;
};

struct CorrespondenceOptions {
  double radius = 2.0;
  GeometricFeatureMode mode = GeometricFeatureMode::kOffset;
};

/// Sort points lexicographically by (x, y, z); non-finite points are dropped.
std::vector<Point3D> canonical_sort(std::span<const Point3D> points);

/// For each BEV cell: the nearest true LiDAR point within `radius` (2D distance), else the
/// nearest pseudo point. Ties go to the smaller canonical index. Cells whose match does not
/// project inside the image get no record. Both point sets are in the LiDAR frame.
CorrespondenceMap build_correspondence_map(std::span<const Point3D> points_true,
                                           std::span<const Point3D> points_pseudo,
                                           const CalibrationProfile& calib, const VoxelGridConfig& bev_cfg,
                                           const ImageMapShape& image_map,
                                           const CorrespondenceOptions& opts = {});

// ---------------------------------------------------------------------------
// Fusion MLP
// ---------------------------------------------------------------------------

struct DenseLayer {
  int in = 0;
  int out = 0;
  std::vector<double> weight;  // [out][in]
  std::vector<double> bias;    // [out]
};

/// Fully connected stack; rectifier after every layer except the last.
struct FusionMLP {
  std::vector<DenseLayer> layers;

  int input_size() const { return layers.empty() ? 0 : layers.front().in; }
  int output_size() const { return layers.empty() ? 0 : layers.back().out; }
  std::vector<int> sizes() const;
  std::size_t parameter_count() const;

  /// Throws ConfigError when layer sizes do not chain or parameters are non-finite.
  void validate() const;

  static FusionMLP zeros(const std::vector<int>& sizes);
  /// He-style uniform init from a seed.
  static FusionMLP random(const std::vector<int>& sizes, std::uint64_t seed);
};

std::vector<double> mlp_forward(const FusionMLP& mlp, std::span<const double> input);

struct MlpGradients {
  std::vector<double> output;
  std::vector<double> input_gradient;
  std::vector<DenseLayer> parameter_gradients;
};

/// Forward pass plus reverse accumulation of d(loss)/d(output) = `upstream`.
MlpGradients mlp_forward_backward(const FusionMLP& mlp, std::span<const double> input,
                                  std::span<const double> upstream);

// ---------------------------------------------------------------------------
// Continuous fusion
// ---------------------------------------------------------------------------

/// MLP input for one matched cell: bilinear image sample at the correspondence followed by
/// its geometric feature.
std::vector<double> fusion_input(const FeatureMap& image, const Correspondence& c);

/// bev + MLP(sample(image), geometric) on every matched cell; unmatched cells unchanged.
FeatureMap continuous_fuse(const FeatureMap& bev, const FeatureMap& image, const CorrespondenceMap& corr,
                           const FusionMLP& mlp);

/// Single-threaded reference of continuous_fuse.
FeatureMap continuous_fuse_serial(const FeatureMap& bev, const FeatureMap& image, const CorrespondenceMap& corr,
                                  const FusionMLP& mlp);

}  // namespace mmf
