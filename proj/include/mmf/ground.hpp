#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mmf/geom.hpp"
#include "mmf/voxel.hpp"

namespace mmf {

/// Per-BEV-cell ground height in meters, [ny][nx], georeferenced by `grid`.
struct GroundHeightMap {
  VoxelGridConfig grid;
  std::vector<float> heights;
  std::vector<unsigned char> valid;
  /// Set when the map was produced from no points at all.
  bool empty_input = false;

  int rows() const { return grid.ny; }
  int cols() const { return grid.nx; }
  float at(int ix, int iy) const { return heights[static_cast<std::size_t>(iy) * grid.nx + ix]; }

  static GroundHeightMap zeros(const VoxelGridConfig& grid);
  static GroundHeightMap constant(const VoxelGridConfig& grid, float h);
};

/// Seam for a learned ground estimator: points -> map on the requested grid.
using GroundEstimator = std::function<GroundHeightMap(std::span<const Point3D>, const VoxelGridConfig&)>;

struct GroundBaselineOptions {
  double percentile = 5.0;  // in [0, 100]
  int neighborhood = 3;     // odd window size in cells
};

/// Low-percentile z over a square cell neighbourhood. Cells without any point in their
/// neighbourhood are invalid and take the height of the nearest valid cell (4-connected BFS,
/// sources seeded in row-major order).
GroundHeightMap estimate_ground_baseline(std::span<const Point3D> points, const VoxelGridConfig& cfg,
                                         const GroundBaselineOptions& opts = {});

/// Linear-interpolated percentile of an unsorted sample; `p` in [0, 100].
double percentile(std::vector<double> values, double p);

/// Subtract the ground height of each point's BEV cell from its z. Points outside the
/// grid's x/y extent pass through. Throws ConfigError when the map's grid differs from `cfg`.
std::vector<Point3D> make_ground_relative(std::span<const Point3D> points, const GroundHeightMap& g,
                                          const VoxelGridConfig& cfg);

struct RestoredBoxes {
  std::vector<Box3D> boxes;
  /// 1 where the box center fell outside the grid and was passed through unchanged.
  std::vector<unsigned char> outside;
};

/// Add the ground height at each box center's cell back onto its z.
RestoredBoxes restore_ground_height(std::span<const Box3D> boxes, const GroundHeightMap& g,
                                    const VoxelGridConfig& cfg);

}  // namespace mmf
