#include "mmf/ground.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "mmf/errors.hpp"

namespace mmf {
namespace {

void check_map(const GroundHeightMap& g, const VoxelGridConfig& cfg) {
  const std::size_t cells = static_cast<std::size_t>(cfg.nx) * cfg.ny;
  if (!(g.grid.x == cfg.x) || !(g.grid.y == cfg.y) || g.grid.nx != cfg.nx || g.grid.ny != cfg.ny ||
      g.heights.size() != cells || g.valid.size() != cells) {
    throw ConfigError("ground map georeference does not match the voxel grid");
  }
}

}  // namespace

GroundHeightMap GroundHeightMap::zeros(const VoxelGridConfig& grid) { return constant(grid, 0.0f); }

GroundHeightMap GroundHeightMap::constant(const VoxelGridConfig& grid, float h) {
  const std::size_t cells = static_cast<std::size_t>(grid.nx) * grid.ny;
  return {grid, std::vector<float>(cells, h), std::vector<unsigned char>(cells, 1), false};
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw InvalidInput("percentile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(p, 0.0, 100.0) / 100.0 * (values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double t = pos - lo;
  return values[lo] + t * (values[hi] - values[lo]);
}

GroundHeightMap estimate_ground_baseline(std::span<const Point3D> points, const VoxelGridConfig& cfg,
                                         const GroundBaselineOptions& opts) {
  cfg.validate();
  if (opts.neighborhood < 1 || opts.neighborhood % 2 == 0) {
    throw ConfigError("ground baseline: neighborhood must be a positive odd number");
  }
  const int nx = cfg.nx;
  const int ny = cfg.ny;
  const std::size_t cells = static_cast<std::size_t>(nx) * ny;
  GroundHeightMap g{cfg, std::vector<float>(cells, 0.0f), std::vector<unsigned char>(cells, 0), false};

  // Bucket z values per cell (CSR layout).
  std::vector<std::size_t> counts(cells + 1, 0);
  std::vector<std::size_t> cell_of(points.size(), cells);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].finite()) continue;
    if (const auto idx = bev_cell_index(points[i].x, points[i].y, cfg)) {
      cell_of[i] = static_cast<std::size_t>((*idx)[1]) * nx + (*idx)[0];
      ++counts[cell_of[i] + 1];
    }
  }
  for (std::size_t c = 0; c < cells; ++c) counts[c + 1] += counts[c];
  std::vector<double> zs(counts[cells]);
  {
    std::vector<std::size_t> fill(counts.begin(), counts.end() - 1);
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (cell_of[i] < cells) zs[fill[cell_of[i]]++] = points[i].z;
    }
  }
  if (zs.empty()) {
    g.empty_input = true;
    return g;
  }

  const int half = opts.neighborhood / 2;
#pragma omp parallel for schedule(dynamic, 8)
  for (int iy = 0; iy < ny; ++iy) {
    std::vector<double> window;
    for (int ix = 0; ix < nx; ++ix) {
      window.clear();
      for (int dy = -half; dy <= half; ++dy) {
        const int yy = iy + dy;
        if (yy < 0 || yy >= ny) continue;
        for (int dx = -half; dx <= half; ++dx) {
          const int xx = ix + dx;
          if (xx < 0 || xx >= nx) continue;
          const std::size_t c = static_cast<std::size_t>(yy) * nx + xx;
          window.insert(window.end(), zs.begin() + counts[c], zs.begin() + counts[c + 1]);
        }
      }
      if (window.empty()) continue;
      const std::size_t c = static_cast<std::size_t>(iy) * nx + ix;
      g.heights[c] = static_cast<float>(percentile(std::move(window), opts.percentile));
      g.valid[c] = 1;
      window = {};
    }
  }

  // Multi-source BFS fill of invalid cells from the nearest valid one.
  std::vector<unsigned char> reached(g.valid);
  std::deque<std::size_t> queue;
  for (std::size_t c = 0; c < cells; ++c) {
    if (reached[c]) queue.push_back(c);
  }
  while (!queue.empty()) {
    const std::size_t c = queue.front();
    queue.pop_front();
    const int ix = static_cast<int>(c % nx);
    const int iy = static_cast<int>(c / nx);
    const int nbr[4][2] = {{0, -1}, {-1, 0}, {1, 0}, {0, 1}};
    for (const auto& d : nbr) {
      const int xx = ix + d[0];
      const int yy = iy + d[1];
      if (xx < 0 || xx >= nx || yy < 0 || yy >= ny) continue;
      const std::size_t n = static_cast<std::size_t>(yy) * nx + xx;
      if (reached[n]) continue;
      reached[n] = 1;
      g.heights[n] = g.heights[c];
      queue.push_back(n);
    }
  }
  return g;
}

std::vector<Point3D> make_ground_relative(std::span<const Point3D> points, const GroundHeightMap& g,
                                          const VoxelGridConfig& cfg) {
  check_map(g, cfg);
  std::vector<Point3D> out(points.begin(), points.end());
  const std::int64_t n = static_cast<std::int64_t>(out.size());
  for (std::int64_t i = 0; i < n; ++i) {
    if (std::isnan(out[i].x) || std::isnan(out[i].y)) {
      throw InvalidInput("make_ground_relative: NaN coordinate at point " + std::to_string(i));
    }
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    if (const auto idx = bev_cell_index(out[i].x, out[i].y, cfg)) {
      out[i].z -= static_cast<double>(g.at((*idx)[0], (*idx)[1]));
    }
  }
  return out;
}

RestoredBoxes restore_ground_height(std::span<const Box3D> boxes, const GroundHeightMap& g,
                                    const VoxelGridConfig& cfg) {
  check_map(g, cfg);
  RestoredBoxes out{std::vector<Box3D>(boxes.begin(), boxes.end()), std::vector<unsigned char>(boxes.size(), 0)};
  for (std::size_t i = 0; i < out.boxes.size(); ++i) {
    auto& b = out.boxes[i];
    const auto idx = std::isnan(b.x) || std::isnan(b.y) ? std::nullopt : bev_cell_index(b.x, b.y, cfg);
    if (!idx) {
      out.outside[i] = 1;
      continue;
    }
    b.z += static_cast<double>(g.at((*idx)[0], (*idx)[1]));
  }
  return out;
}

}  // namespace mmf
