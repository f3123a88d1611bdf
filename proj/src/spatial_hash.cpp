#include "mmf/spatial_hash.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mmf/errors.hpp"

namespace mmf {

UniformGrid2D::UniformGrid2D(std::span<const Point3D> points, double cell, double min_x, double min_y,
                             double max_x, double max_y)
    : points_(points), cell_(cell), min_x_(min_x - cell), min_y_(min_y - cell) {
  if (!(cell > 0.0) || !std::isfinite(cell)) throw InvalidInput("UniformGrid2D: cell size must be positive");
  nx_ = static_cast<int>(std::ceil((max_x + cell - min_x_) / cell)) + 1;
  ny_ = static_cast<int>(std::ceil((max_y + cell - min_y_) / cell)) + 1;
  const std::size_t buckets = static_cast<std::size_t>(nx_) * ny_;
  std::vector<std::uint32_t> bucket_of(points.size(), std::numeric_limits<std::uint32_t>::max());
  start_.assign(buckets + 1, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) continue;
    const double fx = std::floor((p.x - min_x_) / cell_);
    const double fy = std::floor((p.y - min_y_) / cell_);
    if (fx < 0 || fy < 0 || fx >= nx_ || fy >= ny_) continue;
    bucket_of[i] = static_cast<std::uint32_t>(static_cast<std::size_t>(fy) * nx_ + static_cast<std::size_t>(fx));
    ++start_[bucket_of[i] + 1];
  }
  for (std::size_t b = 0; b < buckets; ++b) start_[b + 1] += start_[b];
  items_.resize(start_[buckets]);
  std::vector<std::uint32_t> fill(start_.begin(), start_.end() - 1);
  // Insertion in index order keeps each bucket sorted by index.
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (bucket_of[i] != std::numeric_limits<std::uint32_t>::max()) {
      items_[fill[bucket_of[i]]++] = static_cast<std::uint32_t>(i);
    }
  }
}

std::optional<std::uint32_t> UniformGrid2D::nearest(double x, double y, double radius) const {
  const int bx = static_cast<int>(std::floor((x - min_x_) / cell_));
  const int by = static_cast<int>(std::floor((y - min_y_) / cell_));
  const double r2 = radius * radius;
  double best_d2 = std::numeric_limits<double>::infinity();
  std::uint32_t best = std::numeric_limits<std::uint32_t>::max();
  for (int yy = by - 1; yy <= by + 1; ++yy) {
    if (yy < 0 || yy >= ny_) continue;
    for (int xx = bx - 1; xx <= bx + 1; ++xx) {
      if (xx < 0 || xx >= nx_) continue;
      const std::size_t b = static_cast<std::size_t>(yy) * nx_ + xx;
      for (std::uint32_t k = start_[b]; k < start_[b + 1]; ++k) {
        const std::uint32_t i = items_[k];
        const double dx = points_[i].x - x;
        const double dy = points_[i].y - y;
        const double d2 = dx * dx + dy * dy;
        if (d2 > r2) continue;
        if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
          best_d2 = d2;
          best = i;
        }
      }
    }
  }
  if (best == std::numeric_limits<std::uint32_t>::max()) return std::nullopt;
  return best;
}

}  // namespace mmf
