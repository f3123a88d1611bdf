#pragma once

// Deterministic analytic feature maps standing in for learned backbones.
//
// Image map at stride s (rows = ceil(H / s), cols = ceil(W / s)); for cell (r, c) let
// u = (c + 0.5) s - 0.5 and v = (r + 0.5) s - 0.5 be its pixel-center coordinates:
//   ch 0   depth(round(v), round(u)) / 10, indices clamped to the image; 0 where the
//          dense depth is invalid or absent
//   ch 1   sum of intensities of the points whose nearest pixel lies in
//          [c s, c s + s) x [r s, r s + s), divided by s^2
//   ch k   sin(2 pi u / (32 k)) cos(2 pi v / (32 k)) for k >= 2
//
// BEV map from a voxel tensor T [nz][ny][nx] (stride = x edge, origin = grid minimum);
// for cell (r, c) with metric center (X, Y):
//   ch 0   sum_z T[z][r][c]
//   ch 1   sum_z (z + 0.5) / nz * T[z][r][c]
//   ch k   sin(2 pi X / (4 k)) cos(2 pi Y / (4 k)) for k >= 2
//
// Sums are accumulated in double and stored as float.

#include <array>
#include <span>

#include "mmf/io.hpp"
#include "mmf/tensor.hpp"
#include "mmf/voxel.hpp"

namespace mmf {

inline constexpr std::array<int, 4> kImageStrides = {4, 8, 16, 32};

FeatureMap stub_image_feature_map(std::span<const LidarPoint> points, const CalibrationProfile& calib,
                                  const DenseDepthImage* dense_depth, int stride, int channels);

std::array<FeatureMap, 4> stub_image_feature_maps(std::span<const LidarPoint> points, const CalibrationProfile& calib,
                                                  const DenseDepthImage* dense_depth, int channels);

/// Throws ConfigError when the grid's x and y edges differ.
FeatureMap stub_bev_feature_map(const BevTensor& t, int channels);

}  // namespace mmf
