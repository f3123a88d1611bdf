#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>

#include "mmf/geom.hpp"
#include "mmf/tensor.hpp"

namespace mmf {

struct AxisRange {
  double min = 0.0;
  double max = 1.0;
  friend bool operator==(const AxisRange&, const AxisRange&) = default;
};

/// Metric extent and voxel counts of the LiDAR volume. Ranges are half-open: [min, max).
struct VoxelGridConfig {
  AxisRange x{0.0, 70.0};
  AxisRange y{-40.0, 40.0};
  AxisRange z{-3.0, 2.0};
  int nx = 448;
  int ny = 512;
  int nz = 32;

  double edge_x() const { return (x.max - x.min) / nx; }
  double edge_y() const { return (y.max - y.min) / ny; }
  double edge_z() const { return (z.max - z.min) / nz; }

  /// Metric center of BEV cell (row iy, col ix).
  Vec2 cell_center(int ix, int iy) const {
    return {x.min + (ix + 0.5) * edge_x(), y.min + (iy + 0.5) * edge_y()};
  }

  /// Throws ConfigError when an axis is empty or a count is non-positive.
  void validate() const;

  friend bool operator==(const VoxelGridConfig&, const VoxelGridConfig&) = default;
};

struct VoxelIndex {
  int ix = 0;
  int iy = 0;
  int iz = 0;
  friend bool operator==(const VoxelIndex&, const VoxelIndex&) = default;
};

/// Occupancy volume with height slices as channels: [nz][ny][nx].
struct BevTensor {
  Tensor3<float> values;
  VoxelGridConfig grid;
};

/// floor((c - min) / edge) per axis; empty when outside [min, max) on any axis.
/// Throws InvalidInput on NaN coordinates.
std::optional<VoxelIndex> point_voxel_index(const Point3D& p, const VoxelGridConfig& cfg);

/// BEV-only lookup (x, y); z is ignored. Returns (ix, iy).
std::optional<std::array<int, 2>> bev_cell_index(double x, double y, const VoxelGridConfig& cfg);

struct NodeWeight {
  std::uint64_t node = 0;  // flat index into [nz][ny][nx]
  double weight = 0.0;
};

/// Trilinear split of one point over its 8 surrounding lattice nodes. Nodes sit at
/// min + i * edge; the upper neighbour of the last cell folds onto the last node,
/// so the weights of every in-bounds point land inside the tensor and sum to one.
std::optional<std::array<NodeWeight, 8>> trilinear_weights(const Point3D& p, const VoxelGridConfig& cfg);

/// Scatter points into the occupancy volume. Contributions are accumulated per node in a
/// canonical order (sorted by node, then weight), so the result is bitwise independent of
/// input order and of the thread count. Uses the current OpenMP thread budget.
BevTensor voxelize_trilinear(std::span<const Point3D> points, const VoxelGridConfig& cfg);

/// Single-threaded reference of voxelize_trilinear.
BevTensor voxelize_trilinear_serial(std::span<const Point3D> points, const VoxelGridConfig& cfg);

}  // namespace mmf
