#include "mmf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "mmf/errors.hpp"
#include "mmf/post.hpp"
#include "mmf/random.hpp"

namespace mmf {
namespace {

struct Ray {
  Eigen::Vector3d origin;  // LiDAR frame
  Eigen::Vector3d dir;     // LiDAR frame, scaled so that the parameter is camera depth
};

Ray pixel_ray(double u, double v, const CalibrationProfile& calib) {
  const auto& k = calib.intrinsics;
  const Point3D o = transform_to_lidar({0.0, 0.0, 0.0}, calib);
  const Point3D p = transform_to_lidar({(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0}, calib);
  return {o.vec(), (p - o).vec()};
}

std::optional<double> hit_box(const Box3D& b, const Ray& ray) {
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const Eigen::Vector3d rel = ray.origin - Eigen::Vector3d(b.x, b.y, b.z);
  const double o[3] = {c * rel.x() + s * rel.y(), -s * rel.x() + c * rel.y(), rel.z()};
  const double d[3] = {c * ray.dir.x() + s * ray.dir.y(), -s * ray.dir.x() + c * ray.dir.y(), ray.dir.z()};
  const double half[3] = {0.5 * b.l, 0.5 * b.w, 0.5 * b.h};
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (std::abs(o[a]) > half[a]) return std::nullopt;
      continue;
    }
    double ta = (-half[a] - o[a]) / d[a];
    double tb = (half[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t0 <= t1) || !(t0 > 0.0)) return std::nullopt;
  return t0;
}

std::optional<double> hit_ground(const GroundPlane& g, const Ray& ray, double max_depth) {
  const double denom = ray.dir.z() - g.a * ray.dir.x() - g.b * ray.dir.y();
  if (denom == 0.0) return std::nullopt;
  const double t = (g.height(ray.origin.x(), ray.origin.y()) - ray.origin.z()) / denom;
  if (!(t > 0.0) || t > max_depth) return std::nullopt;
  return t;
}

// Integer pixel window that can contain hits of box b.
struct PixelWindow {
  int u0 = 0, u1 = -1, v0 = 0, v1 = -1;
};

PixelWindow box_window(const Box3D& b, const CalibrationProfile& calib) {
  const int w = calib.image_size.width;
  const int h = calib.image_size.height;
  for (const auto& corner : box_corners(b)) {
    if (!(transform_to_camera(corner, calib).z > 0.0)) return {0, w - 1, 0, h - 1};
  }
  const auto hull = project_box3d_to_image_rect_unclipped(b, calib);
  if (!hull) return {};
  auto clampi = [](double v, int hi) { return static_cast<int>(std::clamp(v, -1.0, hi + 1.0)); };
  PixelWindow win{clampi(std::floor(hull->left()) - 1, w), clampi(std::ceil(hull->right()) + 1, w),
                  clampi(std::floor(hull->top()) - 1, h), clampi(std::ceil(hull->bottom()) + 1, h)};
  win.u0 = std::max(win.u0, 0);
  win.v0 = std::max(win.v0, 0);
  win.u1 = std::min(win.u1, w - 1);
  win.v1 = std::min(win.v1, h - 1);
  return win;
}

struct Render {
  DenseDepthImage depth;
  std::vector<std::int64_t> hits;     // pixels where each box is hit at all
  std::vector<std::int64_t> visible;  // pixels where each box is the nearest surface
};

Render render_scene(std::span<const Box3D> boxes, const GroundPlane& ground, const CalibrationProfile& calib,
                    double max_depth) {
  const int h = calib.image_size.height;
  const int w = calib.image_size.width;
  Render r{DenseDepthImage::filled(h, w, 0.0f), std::vector<std::int64_t>(boxes.size(), 0),
           std::vector<std::int64_t>(boxes.size(), 0)};
  std::vector<PixelWindow> wins(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) wins[i] = box_window(boxes[i], calib);

  const int nb = static_cast<int>(boxes.size());
  std::vector<std::int64_t> hits(boxes.size() * h, 0);
  std::vector<std::int64_t> vis(boxes.size() * h, 0);
#pragma omp parallel for schedule(static)
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const Ray ray = pixel_ray(u, v, calib);
      double best = std::numeric_limits<double>::infinity();
      int owner = -1;
      for (int i = 0; i < nb; ++i) {
        const auto& win = wins[i];
        if (u < win.u0 || u > win.u1 || v < win.v0 || v > win.v1) continue;
        const auto t = hit_box(boxes[i], ray);
        if (!t) continue;
        ++hits[static_cast<std::size_t>(i) * h + v];
        if (*t < best) {
          best = *t;
          owner = i;
        }
      }
      if (owner >= 0) ++vis[static_cast<std::size_t>(owner) * h + v];
      if (const auto g = hit_ground(ground, ray, max_depth); g && *g < best) best = *g;
      if (std::isfinite(best)) r.depth.depth[static_cast<std::size_t>(v) * w + u] = static_cast<float>(best);
    }
  }
  for (int i = 0; i < nb; ++i) {
    for (int v = 0; v < h; ++v) {
      r.hits[i] += hits[static_cast<std::size_t>(i) * h + v];
      r.visible[i] += vis[static_cast<std::size_t>(i) * h + v];
    }
  }
  return r;
}

int occlusion_level(std::int64_t hit, std::int64_t visible) {
  if (hit == 0) return 3;
  const double hidden = 1.0 - static_cast<double>(visible) / static_cast<double>(hit);
  if (hidden <= 0.1) return 0;
  if (hidden <= 0.5) return 1;
  return 2;
}

bool footprint_inside(const Box3D& b, const VoxelGridConfig& g) {
  for (const auto& c : bev_corners(box3d_to_bev(b))) {
    if (c.x < g.x.min || c.x >= g.x.max || c.y < g.y.min || c.y >= g.y.max) return false;
  }
  return true;
}

void check_range(const AxisRange& r, const char* name, bool positive) {
  if (!std::isfinite(r.min) || !std::isfinite(r.max) || r.min > r.max || (positive && !(r.min > 0.0))) {
    throw InvalidInput(std::string("scene spec: invalid ") + name + " range");
  }
}

}  // namespace

void Frame::validate() const {
  calib.validate();
  if (dense_depth && (dense_depth->height != calib.image_size.height || dense_depth->width != calib.image_size.width)) {
    throw InvalidInput("frame " + frame_id + ": depth image size disagrees with calibration image size");
  }
}

void SceneSpec::validate() const {
  if (min_boxes < 0 || max_boxes < min_boxes) throw InvalidInput("scene spec: box count range must satisfy 0 <= min <= max");
  check_range(length, "length", true);
  check_range(width, "width", true);
  check_range(height, "height", true);
  check_range(forward, "forward", true);
  if (!(box_density > 0.0) || !(ground_density > 0.0)) throw InvalidInput("scene spec: densities must be positive");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw InvalidInput("scene spec: noise must be non-negative");
  if (!(min_gap >= 0.0)) throw InvalidInput("scene spec: min_gap must be non-negative");
  if (max_retries < 0) throw InvalidInput("scene spec: max_retries must be non-negative");
  if (!std::isfinite(ground.a) || !std::isfinite(ground.b) || !std::isfinite(ground.c)) {
    throw InvalidInput("scene spec: ground plane must be finite");
  }
  if (!(max_render_depth > 0.0)) throw InvalidInput("scene spec: max_render_depth must be positive");
  extent.validate();
}

CalibrationProfile default_synthetic_calibration() {
  CalibrationProfile c;
  c.intrinsics = {721.5377, 721.5377, 609.5593, 172.854};
  c.image_size = {375, 1242};
  // camera x = -lidar y, camera y = -lidar z, camera z = lidar x
  c.lidar_to_cam.rotation << 0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0;
  c.lidar_to_cam.translation = {0.0, -0.08, -0.27};
  return c;
}

std::optional<double> ray_box_depth(const Box3D& box, double u, double v, const CalibrationProfile& calib) {
  return hit_box(box, pixel_ray(u, v, calib));
}

std::optional<double> ray_ground_depth(const GroundPlane& ground, double u, double v, const CalibrationProfile& calib,
                                       double max_depth) {
  return hit_ground(ground, pixel_ray(u, v, calib), max_depth);
}

DenseDepthImage render_depth(std::span<const Box3D> boxes, const GroundPlane& ground, const CalibrationProfile& calib,
                             double max_depth) {
  return render_scene(boxes, ground, calib, max_depth).depth;
}

double truncation_fraction(const Box3D& b, const CalibrationProfile& calib) {
  const auto full = project_box3d_to_image_rect_unclipped(b, calib);
  if (!full || !(full->w > 0.0) || !(full->h > 0.0)) return 1.0;
  const auto clipped = project_box3d_to_image_rect(b, calib);
  if (!clipped) return 1.0;
  return std::clamp(1.0 - (clipped->w * clipped->h) / (full->w * full->h), 0.0, 1.0);
}

Frame synth_scene(const SceneSpec& spec, const CalibrationProfile& calib) {
  spec.validate();
  calib.validate();
  Rng rng(spec.seed);
  Frame f;
  f.calib = calib;
  char id[32];
  std::snprintf(id, sizeof id, "%06llu", static_cast<unsigned long long>(spec.seed % 1000000));
  f.frame_id = id;

  const auto& k = calib.intrinsics;
  const double lateral = 0.8 * std::min(k.cx, calib.image_size.width - 1.0 - k.cx) / k.fx;
  const int count = static_cast<int>(rng.integer(spec.min_boxes, spec.max_boxes));
  std::vector<Box3D> boxes;
  int attempts = 0;
  while (static_cast<int>(boxes.size()) < count) {
    if (attempts++ >= spec.max_retries) {
      throw GenerationError("synth_scene: could not place " + std::to_string(count) + " boxes within " +
                            std::to_string(spec.max_retries) + " draws");
    }
    Box3D b;
    b.l = rng.uniform(spec.length.min, spec.length.max);
    b.w = rng.uniform(spec.width.min, spec.width.max);
    b.h = rng.uniform(spec.height.min, spec.height.max);
    b.yaw = rng.uniform(-kPi, kPi);
    b.x = rng.uniform(spec.forward.min, spec.forward.max);
    b.y = rng.uniform(-lateral * b.x, lateral * b.x);
    b.z = spec.ground.height(b.x, b.y) + 0.5 * b.h;
    if (!footprint_inside(b, spec.extent)) continue;
    if (!project_box3d_to_image_rect(b, calib)) continue;
    OrientedBoxBEV grown = box3d_to_bev(b);
    grown.w += spec.min_gap;
    grown.l += spec.min_gap;
    bool clear = true;
    for (const auto& o : boxes) {
      OrientedBoxBEV og = box3d_to_bev(o);
      og.w += spec.min_gap;
      og.l += spec.min_gap;
      if (bev_intersection_area(grown, og) > 0.0) {
        clear = false;
        break;
      }
    }
    if (clear) boxes.push_back(b);
  }

  // Box surfaces: the four sides and the roof.
  for (const auto& b : boxes) {
    const double c = std::cos(b.yaw);
    const double s = std::sin(b.yaw);
    struct Face {
      int fixed_axis;
      double sign;
    };
    constexpr Face faces[5] = {{0, 1.0}, {0, -1.0}, {1, 1.0}, {1, -1.0}, {2, 1.0}};
    const double half[3] = {0.5 * b.l, 0.5 * b.w, 0.5 * b.h};
    for (const auto& face : faces) {
      const int a1 = (face.fixed_axis + 1) % 3;
      const int a2 = (face.fixed_axis + 2) % 3;
      const double area = 4.0 * half[a1] * half[a2];
      const auto n = static_cast<std::int64_t>(std::llround(spec.box_density * area));
      for (std::int64_t i = 0; i < n; ++i) {
        double local[3];
        local[face.fixed_axis] = face.sign * half[face.fixed_axis];
        local[a1] = rng.uniform(-half[a1], half[a1]);
        local[a2] = rng.uniform(-half[a2], half[a2]);
        const double dz = rng.uniform(-spec.noise, spec.noise);
        const float intensity = static_cast<float>(rng.uniform(0.5, 0.9));
        f.points.push_back({{b.x + c * local[0] - s * local[1], b.y + s * local[0] + c * local[1],
                             b.z + local[2] + dz},
                            intensity});
      }
    }
  }

  // Ground, skipping samples under a box.
  const auto& g = spec.extent;
  const double area = (g.x.max - g.x.min) * (g.y.max - g.y.min);
  const auto n_ground = static_cast<std::int64_t>(std::llround(spec.ground_density * area));
  for (std::int64_t i = 0; i < n_ground; ++i) {
    const double x = rng.uniform(g.x.min, g.x.max);
    const double y = rng.uniform(g.y.min, g.y.max);
    const double dz = rng.uniform(-spec.noise, spec.noise);
    const float intensity = static_cast<float>(rng.uniform(0.1, 0.3));
    bool under = false;
    for (const auto& b : boxes) {
      if (bev_contains(box3d_to_bev(b), x, y, 0.05)) {
        under = true;
        break;
      }
    }
    if (!under) f.points.push_back({{x, y, spec.ground.height(x, y) + dz}, intensity});
  }

  const Render render = render_scene(boxes, spec.ground, calib, spec.max_render_depth);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    GroundTruthObject obj;
    obj.box3d = boxes[i];
    obj.box2d = *project_box3d_to_image_rect(boxes[i], calib);
    obj.truncation = truncation_fraction(boxes[i], calib);
    obj.occlusion = occlusion_level(render.hits[i], render.visible[i]);
    obj.class_id = 0;
    f.labels.push_back(obj);
  }
  if (spec.render_depth) f.dense_depth = render.depth;
  return f;
}

Point3D SimilarityTransform::apply(const Point3D& p) const {
  const double c = std::cos(rotation);
  const double s = std::sin(rotation);
  return {scale * (c * p.x - s * p.y) + tx, scale * (s * p.x + c * p.y) + ty, scale * p.z};
}

SimilarityTransform sample_augmentation(const AugmentRanges& ranges, std::uint64_t seed) {
  if (!(ranges.max_rotation >= 0.0) || !(ranges.max_translation >= 0.0) || !(ranges.scale.min > 0.0) ||
      ranges.scale.min > ranges.scale.max) {
    throw InvalidInput("augmentation ranges must be non-negative with 0 < scale.min <= scale.max");
  }
  Rng rng(seed);
  SimilarityTransform t;
  t.rotation = rng.uniform(-ranges.max_rotation, ranges.max_rotation);
  t.scale = rng.uniform(ranges.scale.min, ranges.scale.max);
  t.tx = rng.uniform(-ranges.max_translation, ranges.max_translation);
  t.ty = rng.uniform(-ranges.max_translation, ranges.max_translation);
  // Degenerate ranges must give the exact identity.
  if (ranges.max_rotation == 0.0) t.rotation = 0.0;
  if (ranges.max_translation == 0.0) t.tx = t.ty = 0.0;
  if (ranges.scale.min == ranges.scale.max) t.scale = ranges.scale.min;
  return t;
}

Frame augment_frame(const Frame& f, const SimilarityTransform& t) {
  Frame out;
  out.frame_id = f.frame_id;
  out.calib = f.calib;
  if (t.is_identity()) out.dense_depth = f.dense_depth;
  out.points.reserve(f.points.size());
  for (const auto& p : f.points) out.points.push_back({t.apply(p.p), p.intensity});
  for (const auto& obj : f.labels) {
    GroundTruthObject o = obj;
    const Point3D c = t.apply({obj.box3d.x, obj.box3d.y, obj.box3d.z});
    o.box3d = {c.x, c.y, c.z, t.scale * obj.box3d.w, t.scale * obj.box3d.l, t.scale * obj.box3d.h,
               t.rotation == 0.0 ? obj.box3d.yaw : wrap_angle(obj.box3d.yaw + t.rotation)};
    const auto rect = project_box3d_to_image_rect(o.box3d, f.calib);
    o.box2d = rect ? *rect : Box2D{0.0, 0.0, 0.0, 0.0};
    o.truncation = truncation_fraction(o.box3d, f.calib);
    out.labels.push_back(o);
  }
  return out;
}

Frame augment_frame(const Frame& f, std::uint64_t seed, const AugmentRanges& ranges) {
  return augment_frame(f, sample_augmentation(ranges, seed));
}

// ---------------------------------------------------------------------------
// Frame directories

void write_frame(const fs::path& dir, const Frame& f) {
  f.validate();
  write_point_cloud(dir / "velodyne" / (f.frame_id + ".bin"), f.points);
  std::vector<LabelRecord> labels;
  for (const auto& obj : f.labels) labels.push_back(object_to_label(obj, f.calib));
  write_labels(dir / "label_2" / (f.frame_id + ".txt"), labels);
  write_calibration(dir / "calib" / (f.frame_id + ".txt"), f.calib);
  if (f.dense_depth) write_dense_depth(dir / "depth" / (f.frame_id + ".bin"), *f.dense_depth);
}

Frame read_frame(const fs::path& dir, const std::string& frame_id) {
  Frame f;
  f.frame_id = frame_id;
  f.points = read_point_cloud(dir / "velodyne" / (frame_id + ".bin"));
  f.calib = read_calibration(dir / "calib" / (frame_id + ".txt"));
  const fs::path label_path = dir / "label_2" / (frame_id + ".txt");
  if (fs::exists(label_path)) {
    for (const auto& r : read_labels(label_path)) f.labels.push_back(label_to_object(r, f.calib));
  }
  const fs::path raw = dir / "depth" / (frame_id + ".bin");
  const fs::path png = dir / "depth" / (frame_id + ".png");
  if (fs::exists(raw)) {
    f.dense_depth = read_dense_depth(raw);
  } else if (fs::exists(png)) {
    f.dense_depth = read_depth_image(png);
  }
  f.validate();
  return f;
}

std::vector<std::string> list_frames(const fs::path& dir) {
  std::vector<std::string> ids;
  const fs::path velo = dir / "velodyne";
  if (!fs::is_directory(velo)) throw IoError("no velodyne/ directory under " + dir.string());
  for (const auto& e : fs::directory_iterator(velo)) {
    if (e.is_regular_file() && e.path().extension() == ".bin") ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace mmf
