#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mmf/geom.hpp"

namespace mmf {

/// Uniform 2D bucket grid over the (x, y) of a point set for fixed-radius nearest
/// neighbour queries. Points outside `bounds` grown by the query radius are not indexed.
class UniformGrid2D {
 public:
  UniformGrid2D(std::span<const Point3D> points, double cell, double min_x, double min_y, double max_x,
                double max_y);

  /// Index of the nearest point by 2D distance with distance <= radius (radius <= cell).
  /// Ties go to the smaller index.
  std::optional<std::uint32_t> nearest(double x, double y, double radius) const;

 private:
  std::span<const Point3D> points_;
  double cell_;
  double min_x_;
  double min_y_;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<std::uint32_t> start_;
  std::vector<std::uint32_t> items_;
};

}  // namespace mmf
