#include "mmf/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mmf/errors.hpp"

namespace mmf {
namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& dst, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

AxisRange read_range(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ConfigError(where + ": expected [min, max]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

OverlapKind overlap_from(const std::string& s) {
  if (s == "2d") return OverlapKind::k2D;
  if (s == "bev") return OverlapKind::kBEV;
  if (s == "3d") return OverlapKind::k3D;
  throw ConfigError("eval.overlap: unknown kind '" + s + "'");
}

Difficulty difficulty_from(const std::string& s) {
  if (s == "easy") return Difficulty::kEasy;
  if (s == "moderate") return Difficulty::kModerate;
  if (s == "hard") return Difficulty::kHard;
  throw ConfigError("eval.difficulty: unknown level '" + s + "'");
}

void read_grid(const json& j, VoxelGridConfig& g) {
  reject_unknown(j, "grid", {"x_range", "y_range", "z_range", "resolution"});
  if (j.contains("x_range")) g.x = read_range(j["x_range"], "grid.x_range");
  if (j.contains("y_range")) g.y = read_range(j["y_range"], "grid.y_range");
  if (j.contains("z_range")) g.z = read_range(j["z_range"], "grid.z_range");
  if (j.contains("resolution")) {
    const auto& r = j["resolution"];
    if (!r.is_array() || r.size() != 3 || !r[0].is_number_integer() || !r[1].is_number_integer() ||
        !r[2].is_number_integer()) {
      throw ConfigError("grid.resolution: expected [nx, ny, nz]");
    }
    g.nx = r[0].get<int>();
    g.ny = r[1].get<int>();
    g.nz = r[2].get<int>();
  }
}

void read_scene(const json& j, SceneSpec& s) {
  reject_unknown(j, "scene", {"seed", "box_count", "length", "width", "height", "forward", "min_gap", "box_density",
                              "ground_density", "ground_plane", "noise", "max_retries", "render_depth",
                              "max_render_depth"});
  read(j, "seed", s.seed, "scene");
  if (j.contains("box_count")) {
    const auto r = read_range(j["box_count"], "scene.box_count");
    s.min_boxes = static_cast<int>(r.min);
    s.max_boxes = static_cast<int>(r.max);
  }
  if (j.contains("length")) s.length = read_range(j["length"], "scene.length");
  if (j.contains("width")) s.width = read_range(j["width"], "scene.width");
  if (j.contains("height")) s.height = read_range(j["height"], "scene.height");
  if (j.contains("forward")) s.forward = read_range(j["forward"], "scene.forward");
  read(j, "min_gap", s.min_gap, "scene");
  read(j, "box_density", s.box_density, "scene");
  read(j, "ground_density", s.ground_density, "scene");
  if (j.contains("ground_plane")) {
    const auto& g = j["ground_plane"];
    if (!g.is_array() || g.size() != 3 || !g[0].is_number() || !g[1].is_number() || !g[2].is_number()) {
      throw ConfigError("scene.ground_plane: expected [a, b, c] for z = a x + b y + c");
    }
    s.ground = {g[0].get<double>(), g[1].get<double>(), g[2].get<double>()};
  }
  read(j, "noise", s.noise, "scene");
  read(j, "max_retries", s.max_retries, "scene");
  read(j, "render_depth", s.render_depth, "scene");
  read(j, "max_render_depth", s.max_render_depth, "scene");
}

}  // namespace

void PipelineConfig::validate() const {
  grid.validate();
  if (std::abs(grid.edge_x() - grid.edge_y()) > 1e-12 * grid.edge_x()) {
    throw ConfigError("grid: x and y voxel edges must be equal for BEV feature maps");
  }
  if (!(ground.percentile >= 0.0 && ground.percentile <= 100.0)) throw ConfigError("ground.percentile must lie in [0, 100]");
  if (ground.neighborhood < 1 || ground.neighborhood % 2 == 0) throw ConfigError("ground.neighborhood must be odd and >= 1");
  if (!(fusion.radius > 0.0)) throw ConfigError("fusion.radius must be positive");
  if (fusion.pseudo_stride < 1) throw ConfigError("fusion.pseudo_stride must be >= 1");
  for (int h : fusion.hidden) {
    if (h < 1) throw ConfigError("fusion.hidden sizes must be >= 1");
  }
  if (features.image_channels < 2 || features.bev_channels < 2) throw ConfigError("features: channel counts must be >= 2");
  if (roi_grid_n < 1) throw ConfigError("roi.grid_n must be >= 1");
  if (!(loss.lambda >= 0.0) || !(loss.gamma >= 0.0)) throw ConfigError("loss weights must be non-negative");
  if (!(nms.score_threshold >= 0.0 && nms.score_threshold <= 1.0) || !(nms.iou_threshold >= 0.0 && nms.iou_threshold <= 1.0)) {
    throw ConfigError("nms thresholds must lie in [0, 1]");
  }
  if (eval.overlaps.empty() || eval.difficulties.empty() || eval.iou_thresholds.empty()) {
    throw ConfigError("eval: overlap, difficulty and iou_thresholds must be non-empty");
  }
  for (double t : eval.iou_thresholds) {
    if (!(t > 0.0 && t <= 1.0)) throw ConfigError("eval.iou_thresholds must lie in (0, 1]");
  }
  if (!(detector.center_noise >= 0.0)) throw ConfigError("detector.center_noise must be non-negative");
  if (!(detector.score_min >= 0.0 && detector.score_min <= detector.score_max && detector.score_max <= 1.0)) {
    throw ConfigError("detector scores must satisfy 0 <= score_min <= score_max <= 1");
  }
  if (frames < 1) throw ConfigError("frames must be >= 1");
  if (threads < 0) throw ConfigError("threads must be >= 0");
  try {
    scene.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  if (!(scene.extent == grid)) throw ConfigError("scene extent must match the voxel grid");
}

PipelineConfig config_from_json(const json& j, PipelineConfig c) {
  reject_unknown(j, "config", {"$schema", "grid", "ground", "fusion", "features", "roi", "loss", "nms", "eval",
                               "detector", "scene", "augment", "frames", "threads"});
  if (j.contains("grid")) read_grid(j["grid"], c.grid);
  c.scene.extent = c.grid;
  if (j.contains("ground")) {
    reject_unknown(j["ground"], "ground", {"percentile", "neighborhood"});
    read(j["ground"], "percentile", c.ground.percentile, "ground");
    read(j["ground"], "neighborhood", c.ground.neighborhood, "ground");
  }
  if (j.contains("fusion")) {
    const auto& f = j["fusion"];
    reject_unknown(f, "fusion", {"radius", "geometric_feature", "mlp_file", "mlp_seed", "hidden", "use_pseudo_points",
                                 "pseudo_stride"});
    read(f, "radius", c.fusion.radius, "fusion");
    if (f.contains("geometric_feature")) {
      std::string m;
      read(f, "geometric_feature", m, "fusion");
      if (m == "vector") {
        c.fusion.geometric = GeometricFeatureMode::kOffset;
      } else if (m == "scalar") {
        c.fusion.geometric = GeometricFeatureMode::kScalar;
      } else {
        throw ConfigError("fusion.geometric_feature must be 'vector' or 'scalar'");
      }
    }
    if (f.contains("mlp_file") && f["mlp_file"].is_null()) {
      c.fusion.mlp_file.clear();
    } else {
      read(f, "mlp_file", c.fusion.mlp_file, "fusion");
    }
    read(f, "mlp_seed", c.fusion.mlp_seed, "fusion");
    read(f, "hidden", c.fusion.hidden, "fusion");
    read(f, "use_pseudo_points", c.fusion.use_pseudo_points, "fusion");
    read(f, "pseudo_stride", c.fusion.pseudo_stride, "fusion");
  }
  if (j.contains("features")) {
    reject_unknown(j["features"], "features", {"image_channels", "bev_channels"});
    read(j["features"], "image_channels", c.features.image_channels, "features");
    read(j["features"], "bev_channels", c.features.bev_channels, "features");
  }
  if (j.contains("roi")) {
    reject_unknown(j["roi"], "roi", {"grid_n"});
    read(j["roi"], "grid_n", c.roi_grid_n, "roi");
  }
  if (j.contains("loss")) {
    reject_unknown(j["loss"], "loss", {"lambda", "gamma"});
    read(j["loss"], "lambda", c.loss.lambda, "loss");
    read(j["loss"], "gamma", c.loss.gamma, "loss");
  }
  if (j.contains("nms")) {
    reject_unknown(j["nms"], "nms", {"score_threshold", "iou_threshold"});
    read(j["nms"], "score_threshold", c.nms.score_threshold, "nms");
    read(j["nms"], "iou_threshold", c.nms.iou_threshold, "nms");
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    reject_unknown(e, "eval", {"overlap", "difficulty", "iou_thresholds", "class"});
    if (e.contains("overlap")) {
      std::vector<std::string> v;
      read(e, "overlap", v, "eval");
      c.eval.overlaps.clear();
      for (const auto& s : v) c.eval.overlaps.push_back(overlap_from(s));
    }
    if (e.contains("difficulty")) {
      std::vector<std::string> v;
      read(e, "difficulty", v, "eval");
      c.eval.difficulties.clear();
      for (const auto& s : v) c.eval.difficulties.push_back(difficulty_from(s));
    }
    read(e, "iou_thresholds", c.eval.iou_thresholds, "eval");
    if (e.contains("class")) {
      std::string name;
      read(e, "class", name, "eval");
      c.eval.class_id = class_id_from_name(name);
      if (c.eval.class_id < 0) throw ConfigError("eval.class: unknown class '" + name + "'");
    }
  }
  if (j.contains("detector")) {
    reject_unknown(j["detector"], "detector", {"center_noise", "score_min", "score_max"});
    read(j["detector"], "center_noise", c.detector.center_noise, "detector");
    read(j["detector"], "score_min", c.detector.score_min, "detector");
    read(j["detector"], "score_max", c.detector.score_max, "detector");
  }
  if (j.contains("scene")) read_scene(j["scene"], c.scene);
  if (j.contains("augment")) {
    const auto& a = j["augment"];
    reject_unknown(a, "augment", {"enabled", "max_rotation_deg", "max_translation", "scale"});
    read(a, "enabled", c.augment_enabled, "augment");
    if (a.contains("max_rotation_deg")) {
      double deg = 0.0;
      read(a, "max_rotation_deg", deg, "augment");
      c.augment.max_rotation = deg * kPi / 180.0;
    }
    read(a, "max_translation", c.augment.max_translation, "augment");
    if (a.contains("scale")) c.augment.scale = read_range(a["scale"], "augment.scale");
  }
  read(j, "frames", c.frames, "config");
  read(j, "threads", c.threads, "config");
  return c;
}

nlohmann::ordered_json config_to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["grid"] = grid_to_json(c.grid);
  j["grid"].erase("voxel_edge");
  j["ground"] = {{"percentile", c.ground.percentile}, {"neighborhood", c.ground.neighborhood}};
  j["fusion"] = {{"radius", c.fusion.radius},
                 {"geometric_feature", c.fusion.geometric == GeometricFeatureMode::kOffset ? "vector" : "scalar"},
                 {"mlp_file", c.fusion.mlp_file.empty() ? nlohmann::ordered_json(nullptr)
                                                        : nlohmann::ordered_json(c.fusion.mlp_file)},
                 {"mlp_seed", c.fusion.mlp_seed},
                 {"hidden", c.fusion.hidden},
                 {"use_pseudo_points", c.fusion.use_pseudo_points},
                 {"pseudo_stride", c.fusion.pseudo_stride}};
  j["features"] = {{"image_channels", c.features.image_channels}, {"bev_channels", c.features.bev_channels}};
  j["roi"] = {{"grid_n", c.roi_grid_n}};
  j["loss"] = {{"lambda", c.loss.lambda}, {"gamma", c.loss.gamma}};
  j["nms"] = {{"score_threshold", c.nms.score_threshold}, {"iou_threshold", c.nms.iou_threshold}};
  auto overlaps = nlohmann::ordered_json::array();
  for (auto o : c.eval.overlaps) overlaps.push_back(to_string(o));
  auto diffs = nlohmann::ordered_json::array();
  for (auto d : c.eval.difficulties) diffs.push_back(to_string(d));
  j["eval"] = {{"overlap", overlaps},
               {"difficulty", diffs},
               {"iou_thresholds", c.eval.iou_thresholds},
               {"class", class_name_from_id(c.eval.class_id)}};
  j["detector"] = {{"center_noise", c.detector.center_noise},
                   {"score_min", c.detector.score_min},
                   {"score_max", c.detector.score_max}};
  const auto& s = c.scene;
  j["scene"] = {{"seed", s.seed},
                {"box_count", {s.min_boxes, s.max_boxes}},
                {"length", {s.length.min, s.length.max}},
                {"width", {s.width.min, s.width.max}},
                {"height", {s.height.min, s.height.max}},
                {"forward", {s.forward.min, s.forward.max}},
                {"min_gap", s.min_gap},
                {"box_density", s.box_density},
                {"ground_density", s.ground_density},
                {"ground_plane", {s.ground.a, s.ground.b, s.ground.c}},
                {"noise", s.noise},
                {"max_retries", s.max_retries},
                {"render_depth", s.render_depth},
                {"max_render_depth", s.max_render_depth}};
  j["augment"] = {{"enabled", c.augment_enabled},
                  {"max_rotation_deg", c.augment.max_rotation * 180.0 / kPi},
                  {"max_translation", c.augment.max_translation},
                  {"scale", {c.augment.scale.min, c.augment.scale.max}}};
  j["frames"] = c.frames;
  j["threads"] = c.threads;
  return j;
}

PipelineConfig parse_config(std::string_view text, const std::string& source) {
  const json j = parse_json_document(text, source);
  PipelineConfig c = config_from_json(j);
  c.validate();
  return c;
}

PipelineConfig load_config(const fs::path& path) { return parse_config(read_file_text(path), path.string()); }

}  // namespace mmf
