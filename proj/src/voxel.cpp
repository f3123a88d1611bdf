#include "mmf/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <omp.h>
#if defined(__GLIBCXX__)
#include <parallel/algorithm>
#endif

#include "mmf/errors.hpp"

namespace mmf {
namespace {

// Continuous lattice coordinate of `c` on one axis, or -1 when out of range.
inline bool axis_coord(double c, const AxisRange& r, int n, double& f, int& i) {
  if (!(c >= r.min) || !(c < r.max)) return false;
  const double edge = (r.max - r.min) / n;
  f = (c - r.min) / edge;
  i = static_cast<int>(std::floor(f));
  if (i >= n) i = n - 1;  // c just below max can round up to n
  if (i < 0) i = 0;
  return true;
}

bool entry_less(const NodeWeight& a, const NodeWeight& b) {
  return a.node != b.node ? a.node < b.node : a.weight < b.weight;
}

std::vector<NodeWeight> gather_entries(std::span<const Point3D> points, const VoxelGridConfig& cfg, bool parallel) {
  const std::int64_t n = static_cast<std::int64_t>(points.size());
  std::vector<NodeWeight> entries(static_cast<std::size_t>(n) * 8);
  std::vector<unsigned char> valid(static_cast<std::size_t>(n), 0);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto w = trilinear_weights(points[i], cfg);
    if (!w) continue;
    valid[i] = 1;
    std::copy(w->begin(), w->end(), entries.begin() + i * 8);
  }
  std::size_t out = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    for (int k = 0; k < 8; ++k) {
      const auto& e = entries[i * 8 + k];
      if (e.weight > 0.0) entries[out++] = e;
    }
  }
  entries.resize(out);
  return entries;
}

void check_points(std::span<const Point3D> points) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (std::isnan(points[i].x) || std::isnan(points[i].y) || std::isnan(points[i].z)) {
      throw InvalidInput("voxelize: NaN coordinate at point " + std::to_string(i));
    }
  }
}

}  // namespace

void VoxelGridConfig::validate() const {
  if (nx <= 0 || ny <= 0 || nz <= 0) throw ConfigError("voxel grid: counts must be positive");
  for (const auto* r : {&x, &y, &z}) {
    if (!std::isfinite(r->min) || !std::isfinite(r->max) || !(r->max > r->min)) {
      throw ConfigError("voxel grid: each axis needs finite max > min");
    }
  }
  if (!(edge_x() > 0.0) || !(edge_y() > 0.0) || !(edge_z() > 0.0)) {
    throw ConfigError("voxel grid: voxel edges must be positive");
  }
}

std::optional<VoxelIndex> point_voxel_index(const Point3D& p, const VoxelGridConfig& cfg) {
  if (std::isnan(p.x) || std::isnan(p.y) || std::isnan(p.z)) {
    throw InvalidInput("point_voxel_index: NaN coordinate");
  }
  double f;
  VoxelIndex v;
  if (!axis_coord(p.x, cfg.x, cfg.nx, f, v.ix)) return std::nullopt;
  if (!axis_coord(p.y, cfg.y, cfg.ny, f, v.iy)) return std::nullopt;
  if (!axis_coord(p.z, cfg.z, cfg.nz, f, v.iz)) return std::nullopt;
  return v;
}

std::optional<std::array<int, 2>> bev_cell_index(double x, double y, const VoxelGridConfig& cfg) {
  if (std::isnan(x) || std::isnan(y)) throw InvalidInput("bev_cell_index: NaN coordinate");
  double f;
  std::array<int, 2> idx{};
  if (!axis_coord(x, cfg.x, cfg.nx, f, idx[0])) return std::nullopt;
  if (!axis_coord(y, cfg.y, cfg.ny, f, idx[1])) return std::nullopt;
  return idx;
}

std::optional<std::array<NodeWeight, 8>> trilinear_weights(const Point3D& p, const VoxelGridConfig& cfg) {
  double fx, fy, fz;
  int ix, iy, iz;
  if (!axis_coord(p.x, cfg.x, cfg.nx, fx, ix)) return std::nullopt;
  if (!axis_coord(p.y, cfg.y, cfg.ny, fy, iy)) return std::nullopt;
  if (!axis_coord(p.z, cfg.z, cfg.nz, fz, iz)) return std::nullopt;
  const double t[3] = {fx - ix, fy - iy, fz - iz};
  const int lo[3] = {ix, iy, iz};
  const int hi[3] = {std::min(ix + 1, cfg.nx - 1), std::min(iy + 1, cfg.ny - 1), std::min(iz + 1, cfg.nz - 1)};
  const std::uint64_t plane = static_cast<std::uint64_t>(cfg.ny) * cfg.nx;
  std::array<NodeWeight, 8> out;
  for (int k = 0; k < 8; ++k) {
    const bool ux = k & 1, uy = k & 2, uz = k & 4;
    const double w = (ux ? t[0] : 1.0 - t[0]) * (uy ? t[1] : 1.0 - t[1]) * (uz ? t[2] : 1.0 - t[2]);
    const std::uint64_t node = (uz ? hi[2] : lo[2]) * plane +
                               static_cast<std::uint64_t>(uy ? hi[1] : lo[1]) * cfg.nx + (ux ? hi[0] : lo[0]);
    out[k] = {node, w};
  }
  return out;
}

BevTensor voxelize_trilinear_serial(std::span<const Point3D> points, const VoxelGridConfig& cfg) {
  cfg.validate();
  check_points(points);
  BevTensor out{Tensor3<float>(cfg.nz, cfg.ny, cfg.nx), cfg};
  auto entries = gather_entries(points, cfg, false);
  std::sort(entries.begin(), entries.end(), entry_less);
  std::size_t i = 0;
  while (i < entries.size()) {
    const auto node = entries[i].node;
    double acc = 0.0;
    for (; i < entries.size() && entries[i].node == node; ++i) acc += entries[i].weight;
    out.values.data[node] = static_cast<float>(acc);
  }
  return out;
}

BevTensor voxelize_trilinear(std::span<const Point3D> points, const VoxelGridConfig& cfg) {
  cfg.validate();
  check_points(points);
  BevTensor out{Tensor3<float>(cfg.nz, cfg.ny, cfg.nx), cfg};
  auto entries = gather_entries(points, cfg, true);
#if defined(__GLIBCXX__)
  __gnu_parallel::sort(entries.begin(), entries.end(), entry_less);
#else
  std::sort(entries.begin(), entries.end(), entry_less);
#endif
  const std::int64_t m = static_cast<std::int64_t>(entries.size());
  float* dst = out.values.data.data();
#pragma omp parallel
  {
    const int nt = omp_get_num_threads();
    const int tid = omp_get_thread_num();
    std::int64_t begin = m * tid / nt;
    std::int64_t end = m * (tid + 1) / nt;
    // Align segment boundaries to node runs so each run is summed by exactly one thread.
    while (begin > 0 && begin < m && entries[begin].node == entries[begin - 1].node) ++begin;
    while (end > 0 && end < m && entries[end].node == entries[end - 1].node) ++end;
    std::int64_t i = begin;
    while (i < end) {
      const auto node = entries[i].node;
      double acc = 0.0;
      for (; i < m && entries[i].node == node; ++i) acc += entries[i].weight;
      dst[node] = static_cast<float>(acc);
    }
  }
  return out;
}

}  // namespace mmf
