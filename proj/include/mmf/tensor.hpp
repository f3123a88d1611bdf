#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mmf/errors.hpp"

namespace mmf {

/// Read-only channel-major [C][rows][cols] view.
template <class T>
struct GridView {
  std::span<const T> data;
  int channels = 0;
  int rows = 0;
  int cols = 0;

  std::size_t plane() const { return static_cast<std::size_t>(rows) * cols; }
  T at(int c, int r, int x) const { return data[c * plane() + static_cast<std::size_t>(r) * cols + x]; }
};

/// Dense channel-major [C][rows][cols] grid.
template <class T>
struct Tensor3 {
  int channels = 0;
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Tensor3() = default;
  Tensor3(int c, int r, int w, T fill = T{})
      : channels(c), rows(r), cols(w), data(static_cast<std::size_t>(c) * r * w, fill) {
    if (c < 0 || r < 0 || w < 0) throw InvalidInput("tensor dimensions must be non-negative");
  }

  std::size_t plane() const { return static_cast<std::size_t>(rows) * cols; }
  std::size_t index(int c, int r, int x) const { return c * plane() + static_cast<std::size_t>(r) * cols + x; }
  T& at(int c, int r, int x) { return data[index(c, r, x)]; }
  const T& at(int c, int r, int x) const { return data[index(c, r, x)]; }
  GridView<T> view() const { return {std::span<const T>(data), channels, rows, cols}; }
  bool same_shape(const Tensor3& o) const { return channels == o.channels && rows == o.rows && cols == o.cols; }
  friend bool operator==(const Tensor3&, const Tensor3&) = default;
};

/// One bilinear tap: offset within a channel plane and its weight.
struct Tap {
  std::size_t offset = 0;
  double weight = 0.0;
};

/// Clamp-to-edge bilinear taps at continuous (row, col); integer coordinates
/// are cell centers. Weights are non-negative and sum to one.
inline std::array<Tap, 4> bilinear_taps(int rows, int cols, double r, double c) {
  r = std::fmin(std::fmax(r, 0.0), rows - 1.0);
  c = std::fmin(std::fmax(c, 0.0), cols - 1.0);
  const int r0 = static_cast<int>(std::floor(r));
  const int c0 = static_cast<int>(std::floor(c));
  const int r1 = r0 + 1 < rows ? r0 + 1 : r0;
  const int c1 = c0 + 1 < cols ? c0 + 1 : c0;
  const double tr = r - r0;
  const double tc = c - c0;
  auto off = [cols](int rr, int cc) { return static_cast<std::size_t>(rr) * cols + cc; };
  return {Tap{off(r0, c0), (1.0 - tr) * (1.0 - tc)}, Tap{off(r0, c1), (1.0 - tr) * tc},
          Tap{off(r1, c0), tr * (1.0 - tc)}, Tap{off(r1, c1), tr * tc}};
}

template <class T>
double bilinear_sample(const GridView<T>& g, int channel, double r, double c) {
  const auto taps = bilinear_taps(g.rows, g.cols, r, c);
  const std::size_t base = channel * g.plane();
  double v = 0.0;
  for (const auto& t : taps) v += t.weight * static_cast<double>(g.data[base + t.offset]);
  return v;
}

/// Feature grid plus its georeference. Image maps: `stride` is source pixels
/// per cell and the origin is zero. BEV maps: `stride` is meters per cell and
/// (origin_x, origin_y) is the metric corner of cell (0, 0); rows follow y, cols follow x.
struct FeatureMap {
  Tensor3<float> values;
  double stride = 1.0;
  double origin_x = 0.0;
  double origin_y = 0.0;

  int channels() const { return values.channels; }
  int rows() const { return values.rows; }
  int cols() const { return values.cols; }

  /// Continuous cell coordinate of an image pixel position.
  double pixel_to_cell(double px) const { return (px + 0.5) / stride - 0.5; }
  /// Continuous (row, col) of a metric BEV position.
  double metric_to_col(double x) const { return (x - origin_x) / stride - 0.5; }
  double metric_to_row(double y) const { return (y - origin_y) / stride - 0.5; }
};

}  // namespace mmf
