#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Geometry>

#include "mmf/geom.hpp"
#include "mmf/random.hpp"

namespace mmf::test {

/// Camera frame equal to the LiDAR frame, pinhole with the given intrinsics.
inline CalibrationProfile pinhole(double f, double cx, double cy, ImageSize size = {375, 1242}) {
  CalibrationProfile c = CalibrationProfile::identity(size);
  c.intrinsics = {f, f, cx, cy};
  return c;
}

inline Eigen::Matrix3d random_rotation(Rng& rng) {
  Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
  axis.normalize();
  return Eigen::AngleAxisd(rng.uniform(-kPi, kPi), axis).toRotationMatrix();
}

inline Box3D random_box(Rng& rng, double spread = 5.0) {
  return {rng.uniform(-spread, spread), rng.uniform(-spread, spread), rng.uniform(-1, 1), rng.uniform(0.5, 3.0),
          rng.uniform(0.5, 5.0),        rng.uniform(0.5, 2.5),          rng.uniform(-kPi, kPi)};
}

}  // namespace mmf::test

#include <filesystem>
#include <string>
#include <unistd.h>

namespace mmf::test {

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("mmf_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

}  // namespace mmf::test
