#include "mmf/io.hpp"

#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>

#include "mmf/errors.hpp"

namespace mmf {
namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

float load_f32(const std::byte* p) {
  std::uint32_t u;
  std::memcpy(&u, p, 4);
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

void store_f32(std::byte* p, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
  std::memcpy(p, &u, 4);
}

std::uint32_t load_u32(const std::byte* p) {
  std::uint32_t u;
  std::memcpy(&u, p, 4);
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
  return u;
}

void store_u32(std::byte* p, std::uint32_t u) {
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
  std::memcpy(p, &u, 4);
}

std::vector<std::byte> floats_to_bytes(std::span<const float> values) {
  std::vector<std::byte> out(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) store_f32(out.data() + 4 * i, values[i]);
  return out;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

std::optional<double> to_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<long> to_long(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Iterate lines with 1-based numbers; strips a trailing '\r'.
template <class F>
void for_each_line(std::string_view text, F&& f) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    f(line_no, line);
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  // Avoid "-0.000000" so that write -> read -> write is byte stable.
  if (std::strcmp(buf, "-0.000000") == 0) return "0.000000";
  return buf;
}

Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

}  // namespace

// ---------------------------------------------------------------------------
// Files

std::vector<std::byte> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  if (size < 0) throw IoError("cannot size " + path.string());
  in.seekg(0, std::ios::beg);
  std::vector<std::byte> bytes(static_cast<std::size_t>(size));
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), size)) throw IoError("cannot read " + path.string());
  return bytes;
}

std::string read_file_text(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

void write_file_bytes(const fs::path& path, std::span<const std::byte> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

void write_file_text(const fs::path& path, std::string_view text) {
  write_file_bytes(path, std::as_bytes(std::span<const char>(text.data(), text.size())));
}

// ---------------------------------------------------------------------------
// Point clouds

std::vector<LidarPoint> parse_point_cloud(std::span<const std::byte> bytes, const std::string& source) {
  if (bytes.size() % 16 != 0) {
    throw ParseError(source, ParseError::Unit::kByte, bytes.size() - bytes.size() % 16,
                     "truncated record: file size " + std::to_string(bytes.size()) + " is not a multiple of 16");
  }
  const std::size_t n = bytes.size() / 16;
  std::vector<LidarPoint> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::byte* rec = bytes.data() + 16 * i;
    const float x = load_f32(rec), y = load_f32(rec + 4), z = load_f32(rec + 8), r = load_f32(rec + 12);
    if (std::isnan(x) || std::isnan(y) || std::isnan(z) || std::isnan(r)) {
      throw ParseError(source, ParseError::Unit::kByte, 16 * i, "NaN in record " + std::to_string(i));
    }
    out[i] = {{x, y, z}, r};
  }
  return out;
}

std::vector<std::byte> serialize_point_cloud(std::span<const LidarPoint> points) {
  std::vector<std::byte> out(points.size() * 16);
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::byte* rec = out.data() + 16 * i;
    store_f32(rec, static_cast<float>(points[i].p.x));
    store_f32(rec + 4, static_cast<float>(points[i].p.y));
    store_f32(rec + 8, static_cast<float>(points[i].p.z));
    store_f32(rec + 12, points[i].intensity);
  }
  return out;
}

std::vector<LidarPoint> read_point_cloud(const fs::path& path) {
  return parse_point_cloud(read_file_bytes(path), path.string());
}

void write_point_cloud(const fs::path& path, std::span<const LidarPoint> points) {
  write_file_bytes(path, serialize_point_cloud(points));
}

std::vector<Point3D> xyz_of(std::span<const LidarPoint> points) {
  std::vector<Point3D> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = points[i].p;
  return out;
}

// ---------------------------------------------------------------------------
// Labels

std::vector<LabelRecord> parse_labels(std::string_view text, const std::string& source) {
  std::vector<LabelRecord> out;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const auto f = split_ws(line);
    if (f.empty()) return;
    if (f.size() != 15 && f.size() != 16) {
      throw ParseError(source, ParseError::Unit::kLine, line_no,
                       "expected 15 or 16 fields, found " + std::to_string(f.size()));
    }
    auto num = [&](std::size_t i) {
      const auto v = to_double(f[i]);
      if (!v) throw ParseError(source, ParseError::Unit::kLine, line_no, "field " + std::to_string(i + 1) + " is not a finite number");
      return *v;
    };
    LabelRecord r;
    r.type = std::string(f[0]);
    r.truncated = num(1);
    const auto occ = to_long(f[2]);
    if (!occ || *occ < -1 || *occ > 3) {
      throw ParseError(source, ParseError::Unit::kLine, line_no, "field 3 (occluded) must be an integer in [-1, 3]");
    }
    r.occluded = static_cast<int>(*occ);
    r.alpha = num(3);
    for (int k = 0; k < 4; ++k) r.bbox[k] = num(4 + k);
    r.height = num(8);
    r.width = num(9);
    r.length = num(10);
    for (int k = 0; k < 3; ++k) r.location[k] = num(11 + k);
    r.rotation_y = num(14);
    if (f.size() == 16) r.score = num(15);
    out.push_back(std::move(r));
  });
  return out;
}

std::string serialize_labels(std::span<const LabelRecord> labels) {
  std::string out;
  for (const auto& r : labels) {
    out += r.type;
    out += ' ' + fmt6(r.truncated) + ' ' + std::to_string(r.occluded) + ' ' + fmt6(r.alpha);
    for (double v : r.bbox) out += ' ' + fmt6(v);
    out += ' ' + fmt6(r.height) + ' ' + fmt6(r.width) + ' ' + fmt6(r.length);
    for (double v : r.location) out += ' ' + fmt6(v);
    out += ' ' + fmt6(r.rotation_y);
    if (r.score) out += ' ' + fmt6(*r.score);
    out += '\n';
  }
  return out;
}

std::vector<LabelRecord> read_labels(const fs::path& path) { return parse_labels(read_file_text(path), path.string()); }

void write_labels(const fs::path& path, std::span<const LabelRecord> labels) {
  write_file_text(path, serialize_labels(labels));
}

int class_id_from_name(std::string_view name) {
  if (name == "Car") return 0;
  if (name == "Pedestrian") return 1;
  if (name == "Cyclist") return 2;
  if (name == "Van") return 3;
  if (name == "Truck") return 4;
  return -1;
}

std::string class_name_from_id(int id) {
  switch (id) {
    case 0: return "Car";
    case 1: return "Pedestrian";
    case 2: return "Cyclist";
    case 3: return "Van";
    case 4: return "Truck";
    default: return "DontCare";
  }
}

namespace {

// Heading direction in the camera frame for a LiDAR yaw; KITTI's rotation_y measures
// the camera-frame heading (cos ry, 0, -sin ry).
double yaw_to_rotation_y(double yaw, const CalibrationProfile& calib) {
  Eigen::Vector3d d(std::cos(yaw), std::sin(yaw), 0.0);
  d = calib.lidar_to_cam.rotation * d;
  if (calib.rectification) d = *calib.rectification * d;
  return wrap_angle(std::atan2(-d.z(), d.x()));
}

double rotation_y_to_yaw(double ry, const CalibrationProfile& calib) {
  Eigen::Vector3d d(std::cos(ry), 0.0, -std::sin(ry));
  if (calib.rectification) d = calib.rectification->transpose() * d;
  d = calib.lidar_to_cam.rotation.transpose() * d;
  return wrap_angle(std::atan2(d.y(), d.x()));
}

}  // namespace

GroundTruthObject label_to_object(const LabelRecord& label, const CalibrationProfile& calib) {
  GroundTruthObject obj;
  const Point3D bottom = transform_to_lidar({label.location[0], label.location[1], label.location[2]}, calib);
  obj.box3d = {bottom.x, bottom.y, bottom.z + 0.5 * label.height, label.width, label.length, label.height,
               rotation_y_to_yaw(label.rotation_y, calib)};
  obj.box2d = Box2D::from_ltrb(label.bbox[0], label.bbox[1], label.bbox[2], label.bbox[3]);
  obj.truncation = label.truncated;
  obj.occlusion = label.occluded;
  obj.class_id = class_id_from_name(label.type);
  return obj;
}

LabelRecord object_to_label(const GroundTruthObject& obj, const CalibrationProfile& calib,
                            std::optional<double> score) {
  LabelRecord r;
  r.type = class_name_from_id(obj.class_id);
  r.truncated = obj.truncation;
  r.occluded = obj.occlusion;
  const Box3D& b = obj.box3d;
  const Point3D bottom = transform_to_camera({b.x, b.y, b.z - 0.5 * b.h}, calib);
  r.location = {bottom.x, bottom.y, bottom.z};
  r.height = b.h;
  r.width = b.w;
  r.length = b.l;
  r.rotation_y = yaw_to_rotation_y(b.yaw, calib);
  const Point3D center = transform_to_camera({b.x, b.y, b.z}, calib);
  r.alpha = wrap_angle(r.rotation_y - std::atan2(center.x, center.z));
  r.bbox = {obj.box2d.left(), obj.box2d.top(), obj.box2d.right(), obj.box2d.bottom()};
  r.score = score;
  return r;
}

Detection label_to_detection(const LabelRecord& label, const CalibrationProfile& calib) {
  const auto obj = label_to_object(label, calib);
  return {obj.box3d, label.score.value_or(1.0), obj.class_id};
}

namespace {

// Offset of the first numeric literal outside strings that overflows a double.
std::size_t overflowing_number(std::string_view text) {
  bool in_string = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_string) {
      if (ch == '\\') {
        ++i;
      } else if (ch == '"') {
        in_string = false;
      }
      continue;
    }
    if (ch == '"') {
      in_string = true;
    } else if (ch == '-' || std::isdigit(static_cast<unsigned char>(ch))) {
      std::size_t end = i + 1;
      while (end < text.size() && text[end] != '\0' && std::strchr("+-0123456789.eE", text[end])) ++end;
      const std::string token(text.substr(i, end - i));
      if (std::isinf(std::strtod(token.c_str(), nullptr))) return i;
      i = end - 1;
    }
  }
  return 0;
}

}  // namespace

nlohmann::json parse_json_document(std::string_view text, const std::string& source, std::uint64_t base) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // The library counts bytes from 1 and reports one past the end on truncation.
    const std::uint64_t at = std::min<std::uint64_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    throw ParseError(source, ParseError::Unit::kByte, base + at, "invalid JSON");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, ParseError::Unit::kByte, base + overflowing_number(text), "number out of range");
  }
}

// ---------------------------------------------------------------------------
// Calibration

CalibrationProfile parse_calibration(std::string_view text, const std::string& source) {
  std::optional<std::array<double, 12>> p2;
  std::optional<std::array<double, 12>> tr;
  std::optional<std::array<double, 9>> r0;
  std::optional<std::array<double, 2>> img;
  std::size_t p2_line = 0, tr_line = 0, r0_line = 0, img_line = 0, last_line = 0;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (split_ws(line).empty()) return;
    last_line = line_no;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) {
      throw ParseError(source, ParseError::Unit::kLine, line_no, "expected 'KEY: values'");
    }
    const auto key_fields = split_ws(line.substr(0, colon));
    if (key_fields.size() != 1) throw ParseError(source, ParseError::Unit::kLine, line_no, "malformed key");
    const std::string_view key = key_fields[0];
    auto values = [&](auto& dst) {
      const auto f = split_ws(line.substr(colon + 1));
      if (f.size() != dst.size()) {
        throw ParseError(source, ParseError::Unit::kLine, line_no,
                         std::string(key) + " needs " + std::to_string(dst.size()) + " values, found " +
                             std::to_string(f.size()));
      }
      for (std::size_t i = 0; i < f.size(); ++i) {
        const auto v = to_double(f[i]);
        if (!v) throw ParseError(source, ParseError::Unit::kLine, line_no, std::string(key) + ": value " + std::to_string(i + 1) + " is not a finite number");
        dst[i] = *v;
      }
    };
    if (key == "P2") {
      p2.emplace();
      values(*p2);
      p2_line = line_no;
    } else if (key == "Tr_velo_to_cam" || key == "Tr_velo_cam") {
      tr.emplace();
      values(*tr);
      tr_line = line_no;
    } else if (key == "R0_rect" || key == "R_rect") {
      r0.emplace();
      values(*r0);
      r0_line = line_no;
    } else if (key == "IMG_SIZE") {
      img.emplace();
      values(*img);
      img_line = line_no;
    }
  });
  // A missing key is reported one past the last line.
  if (!p2) throw ParseError(source, ParseError::Unit::kLine, last_line + 1, "missing P2");
  if (!tr) throw ParseError(source, ParseError::Unit::kLine, last_line + 1, "missing Tr_velo_to_cam");

  const auto& P = *p2;
  CalibrationProfile c;
  c.intrinsics = {P[0], P[5], P[2], P[6]};
  if (!(c.intrinsics.fx > 0.0) || !(c.intrinsics.fy > 0.0)) {
    throw ParseError(source, ParseError::Unit::kLine, p2_line, "P2 focal lengths must be positive");
  }
  auto to_rotation = [&](const Eigen::Matrix3d& m, const char* what, std::size_t line) {
    if (is_rotation(m)) return m;
    if (!is_rotation(m, 1e-3)) throw ParseError(source, ParseError::Unit::kLine, line, std::string(what) + " is not a rotation");
    return nearest_rotation(m);
  };
  Eigen::Matrix3d rot;
  rot << (*tr)[0], (*tr)[1], (*tr)[2], (*tr)[4], (*tr)[5], (*tr)[6], (*tr)[8], (*tr)[9], (*tr)[10];
  c.lidar_to_cam.rotation = to_rotation(rot, "Tr_velo_to_cam", tr_line);
  c.lidar_to_cam.translation = {(*tr)[3], (*tr)[7], (*tr)[11]};
  if (r0) {
    Eigen::Matrix3d m;
    m << (*r0)[0], (*r0)[1], (*r0)[2], (*r0)[3], (*r0)[4], (*r0)[5], (*r0)[6], (*r0)[7], (*r0)[8];
    c.rectification = to_rotation(m, "R0_rect", r0_line);
  }
  // The fourth column of P2 is K * e for an offset e applied after rectification; fold
  // it into the extrinsic translation: Rect(R p + t) + e = Rect(R p + t + Rect^T e).
  const double ez = P[11];
  const Eigen::Vector3d e((P[3] - c.intrinsics.cx * ez) / c.intrinsics.fx,
                          (P[7] - c.intrinsics.cy * ez) / c.intrinsics.fy, ez);
  c.lidar_to_cam.translation += c.rectification ? Eigen::Vector3d(c.rectification->transpose() * e) : e;
  if (img) {
    if (!((*img)[0] >= 1.0 && (*img)[0] <= 1e6 && (*img)[1] >= 1.0 && (*img)[1] <= 1e6)) {
      throw ParseError(source, ParseError::Unit::kLine, img_line, "IMG_SIZE must be positive");
    }
    c.image_size = {static_cast<int>((*img)[0]), static_cast<int>((*img)[1])};
  }
  try {
    c.validate();
  } catch (const InvalidInput& ex) {
    // Everything left to fail here derives from P2, except a translation from Tr.
    const bool p2_ok = std::isfinite(c.intrinsics.fx) && std::isfinite(c.intrinsics.fy) &&
                       std::isfinite(c.intrinsics.cx) && std::isfinite(c.intrinsics.cy) && std::isfinite(P[3]) &&
                       std::isfinite(P[7]) && std::isfinite(P[11]);
    throw ParseError(source, ParseError::Unit::kLine, p2_ok ? tr_line : p2_line, ex.what());
  }
  return c;
}

std::string serialize_calibration(const CalibrationProfile& calib) {
  auto row = [](const char* key, std::initializer_list<double> v) {
    std::string s = key;
    s += ':';
    char buf[40];
    for (double x : v) {
      std::snprintf(buf, sizeof buf, " %.17g", x);
      s += buf;
    }
    return s + '\n';
  };
  const auto& k = calib.intrinsics;
  const auto& r = calib.lidar_to_cam.rotation;
  const auto& t = calib.lidar_to_cam.translation;
  const Eigen::Matrix3d rect = calib.rectification.value_or(Eigen::Matrix3d::Identity());
  std::string out;
  out += row("P2", {k.fx, 0.0, k.cx, 0.0, 0.0, k.fy, k.cy, 0.0, 0.0, 0.0, 1.0, 0.0});
  if (calib.rectification) {
    out += row("R0_rect", {rect(0, 0), rect(0, 1), rect(0, 2), rect(1, 0), rect(1, 1), rect(1, 2), rect(2, 0),
                           rect(2, 1), rect(2, 2)});
  }
  out += row("Tr_velo_to_cam",
             {r(0, 0), r(0, 1), r(0, 2), t.x(), r(1, 0), r(1, 1), r(1, 2), t.y(), r(2, 0), r(2, 1), r(2, 2), t.z()});
  out += "IMG_SIZE: " + std::to_string(calib.image_size.height) + " " + std::to_string(calib.image_size.width) + "\n";
  return out;
}

CalibrationProfile read_calibration(const fs::path& path) {
  return parse_calibration(read_file_text(path), path.string());
}

void write_calibration(const fs::path& path, const CalibrationProfile& calib) {
  write_file_text(path, serialize_calibration(calib));
}

// ---------------------------------------------------------------------------
// Raw grids

fs::path sidecar_path(const fs::path& raw) { return fs::path(raw.string() + ".json"); }

void write_raw_grid(const fs::path& raw, std::span<const float> values, const std::vector<int>& shape,
                    const std::string& axis_order, nlohmann::ordered_json extra) {
  nlohmann::ordered_json j;
  j["shape"] = shape;
  j["axis_order"] = axis_order;
  j["dtype"] = "float32";
  j["byte_order"] = "little";
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  write_file_bytes(raw, floats_to_bytes(values));
  write_file_text(sidecar_path(raw), j.dump(2) + "\n");
}

RawGrid parse_raw_grid(std::string_view sidecar, std::span<const std::byte> payload, const std::string& source) {
  RawGrid g;
  g.meta = parse_json_document(sidecar, source + ".json");
  // Semantic errors point at the offending key, or at the end of the document when it is absent.
  auto fail = [&](const char* key, const std::string& what) {
    const auto at = key ? sidecar.find('"' + std::string(key) + '"') : std::string_view::npos;
    return ParseError(source + ".json", ParseError::Unit::kByte, at == std::string_view::npos ? sidecar.size() : at,
                      what);
  };
  if (!g.meta.is_object()) throw fail(nullptr, "sidecar must be a JSON object");
  if (!g.meta.contains("dtype") || g.meta["dtype"] != "float32") throw fail("dtype", "dtype must be float32");
  if (g.meta.contains("byte_order") && g.meta["byte_order"] != "little") {
    throw fail("byte_order", "byte_order must be little");
  }
  if (!g.meta.contains("shape") || !g.meta["shape"].is_array() || g.meta["shape"].empty()) {
    throw fail("shape", "shape must be a non-empty array");
  }
  std::uint64_t count = 1;
  for (const auto& d : g.meta["shape"]) {
    if (!d.is_number_integer() || d.get<std::int64_t>() < 0 || d.get<std::int64_t>() > (1 << 24)) {
      throw fail("shape", "shape entries must be integers in [0, 2^24]");
    }
    g.shape.push_back(d.get<int>());
    count *= static_cast<std::uint64_t>(g.shape.back());
    if (count > (std::uint64_t{1} << 32)) throw fail("shape", "shape too large");
  }
  if (payload.size() != count * 4) {
    throw ParseError(source, ParseError::Unit::kByte, std::min<std::uint64_t>(payload.size(), count * 4),
                     "payload holds " + std::to_string(payload.size()) + " bytes, shape needs " +
                         std::to_string(count * 4));
  }
  g.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) g.values[i] = load_f32(payload.data() + 4 * i);
  return g;
}

RawGrid read_raw_grid(const fs::path& raw) {
  return parse_raw_grid(read_file_text(sidecar_path(raw)), read_file_bytes(raw), raw.string());
}

nlohmann::ordered_json grid_to_json(const VoxelGridConfig& cfg) {
  nlohmann::ordered_json j;
  j["x_range"] = {cfg.x.min, cfg.x.max};
  j["y_range"] = {cfg.y.min, cfg.y.max};
  j["z_range"] = {cfg.z.min, cfg.z.max};
  j["resolution"] = {cfg.nx, cfg.ny, cfg.nz};
  j["voxel_edge"] = {cfg.edge_x(), cfg.edge_y(), cfg.edge_z()};
  return j;
}

VoxelGridConfig grid_from_json(const nlohmann::json& j) {
  try {
    VoxelGridConfig cfg;
    cfg.x = {j.at("x_range").at(0).get<double>(), j.at("x_range").at(1).get<double>()};
    cfg.y = {j.at("y_range").at(0).get<double>(), j.at("y_range").at(1).get<double>()};
    cfg.z = {j.at("z_range").at(0).get<double>(), j.at("z_range").at(1).get<double>()};
    cfg.nx = j.at("resolution").at(0).get<int>();
    cfg.ny = j.at("resolution").at(1).get<int>();
    cfg.nz = j.at("resolution").at(2).get<int>();
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("grid config: ") + e.what());
  }
}

void write_bev_tensor(const fs::path& raw, const BevTensor& t) {
  nlohmann::ordered_json extra;
  extra["grid"] = grid_to_json(t.grid);
  write_raw_grid(raw, t.values.data, {t.values.channels, t.values.rows, t.values.cols}, "channel,row,col",
                 std::move(extra));
}

BevTensor read_bev_tensor(const fs::path& raw) {
  auto g = read_raw_grid(raw);
  if (g.shape.size() != 3) throw ParseError(raw.string() + ".json", ParseError::Unit::kNone, 0, "BEV tensor needs a 3D shape");
  BevTensor t;
  try {
    t.grid = grid_from_json(g.meta.at("grid"));
  } catch (const std::exception& e) {
    throw ParseError(raw.string() + ".json", ParseError::Unit::kNone, 0, e.what());
  }
  if (g.shape[0] != t.grid.nz || g.shape[1] != t.grid.ny || g.shape[2] != t.grid.nx) {
    throw ParseError(raw.string() + ".json", ParseError::Unit::kNone, 0, "shape disagrees with grid resolution");
  }
  t.values.channels = g.shape[0];
  t.values.rows = g.shape[1];
  t.values.cols = g.shape[2];
  t.values.data = std::move(g.values);
  return t;
}

void write_feature_map(const fs::path& raw, const FeatureMap& m) {
  nlohmann::ordered_json extra;
  extra["stride"] = m.stride;
  extra["origin"] = {m.origin_x, m.origin_y};
  write_raw_grid(raw, m.values.data, {m.channels(), m.rows(), m.cols()}, "channel,row,col", std::move(extra));
}

FeatureMap read_feature_map(const fs::path& raw) {
  auto g = read_raw_grid(raw);
  const std::string src = raw.string() + ".json";
  if (g.shape.size() != 3) throw ParseError(src, ParseError::Unit::kNone, 0, "feature map needs a 3D shape");
  FeatureMap m;
  try {
    m.stride = g.meta.at("stride").get<double>();
    m.origin_x = g.meta.at("origin").at(0).get<double>();
    m.origin_y = g.meta.at("origin").at(1).get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(src, ParseError::Unit::kNone, 0, e.what());
  }
  if (!(m.stride > 0.0)) throw ParseError(src, ParseError::Unit::kNone, 0, "stride must be positive");
  m.values.channels = g.shape[0];
  m.values.rows = g.shape[1];
  m.values.cols = g.shape[2];
  m.values.data = std::move(g.values);
  return m;
}

void write_ground_map(const fs::path& raw, const GroundHeightMap& g) {
  nlohmann::ordered_json extra;
  extra["grid"] = grid_to_json(g.grid);
  extra["empty_input"] = g.empty_input;
  write_raw_grid(raw, g.heights, {g.rows(), g.cols()}, "row,col", std::move(extra));
  std::vector<std::byte> bits((g.valid.size() + 7) / 8, std::byte{0});
  for (std::size_t i = 0; i < g.valid.size(); ++i) {
    if (g.valid[i]) bits[i / 8] |= std::byte{static_cast<unsigned char>(1u << (i % 8))};
  }
  write_file_bytes(fs::path(raw.string() + ".mask"), bits);
}

GroundHeightMap read_ground_map(const fs::path& raw) {
  auto g = read_raw_grid(raw);
  const std::string src = raw.string() + ".json";
  GroundHeightMap m;
  try {
    m.grid = grid_from_json(g.meta.at("grid"));
    m.empty_input = g.meta.value("empty_input", false);
  } catch (const std::exception& e) {
    throw ParseError(src, ParseError::Unit::kNone, 0, e.what());
  }
  if (g.shape.size() != 2 || g.shape[0] != m.grid.ny || g.shape[1] != m.grid.nx) {
    throw ParseError(src, ParseError::Unit::kNone, 0, "shape disagrees with grid resolution");
  }
  m.heights = std::move(g.values);
  const auto bits = read_file_bytes(fs::path(raw.string() + ".mask"));
  if (bits.size() != (m.heights.size() + 7) / 8) {
    throw ParseError(raw.string() + ".mask", ParseError::Unit::kByte, bits.size(), "mask size mismatch");
  }
  m.valid.resize(m.heights.size());
  for (std::size_t i = 0; i < m.valid.size(); ++i) {
    m.valid[i] = (std::to_integer<unsigned>(bits[i / 8]) >> (i % 8)) & 1u;
  }
  return m;
}

void write_dense_depth(const fs::path& raw, const DenseDepthImage& d) {
  nlohmann::ordered_json extra;
  extra["unit"] = "meters";
  write_raw_grid(raw, d.depth, {d.height, d.width}, "row,col", std::move(extra));
}

DenseDepthImage read_dense_depth(const fs::path& raw) {
  auto g = read_raw_grid(raw);
  if (g.shape.size() != 2) throw ParseError(raw.string() + ".json", ParseError::Unit::kNone, 0, "depth image needs a 2D shape");
  return {g.shape[0], g.shape[1], std::move(g.values)};
}

namespace {

std::uint32_t load_be32(const std::byte* p) {
  return (std::to_integer<std::uint32_t>(p[0]) << 24) | (std::to_integer<std::uint32_t>(p[1]) << 16) |
         (std::to_integer<std::uint32_t>(p[2]) << 8) | std::to_integer<std::uint32_t>(p[3]);
}

struct PngLayout {
  std::size_t first_idat = 0;
};

// Walk the chunk structure so corrupt files are reported at the offending byte; libpng's
// simplified API only says that something failed.
PngLayout walk_png_chunks(std::span<const std::byte> bytes, const std::string& source) {
  static constexpr unsigned char kSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  for (std::size_t i = 0; i < 8; ++i) {
    if (i >= bytes.size() || std::to_integer<unsigned char>(bytes[i]) != kSig[i]) {
      throw ParseError(source, ParseError::Unit::kByte, i, "not a PNG signature");
    }
  }
  PngLayout layout;
  std::size_t off = 8;
  bool first = true;
  while (true) {
    if (bytes.size() - off < 12) throw ParseError(source, ParseError::Unit::kByte, off, "truncated PNG chunk");
    const std::uint32_t len = load_be32(bytes.data() + off);
    if (len > 0x7fffffffu || len > bytes.size() - off - 12) {
      throw ParseError(source, ParseError::Unit::kByte, off, "PNG chunk length exceeds file");
    }
    const std::byte* type = bytes.data() + off + 4;
    for (int i = 0; i < 4; ++i) {
      if (!std::isalpha(std::to_integer<unsigned char>(type[i]))) {
        throw ParseError(source, ParseError::Unit::kByte, off + 4 + i, "bad PNG chunk type");
      }
    }
    const std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(type), static_cast<uInt>(len + 4)));
    if (crc != load_be32(type + 4 + len)) {
      throw ParseError(source, ParseError::Unit::kByte, off + 8 + len, "PNG chunk CRC mismatch");
    }
    const std::string_view name(reinterpret_cast<const char*>(type), 4);
    if (first && (name != "IHDR" || len != 13)) {
      throw ParseError(source, ParseError::Unit::kByte, off, "PNG must start with a 13-byte IHDR");
    }
    if (name == "IDAT" && layout.first_idat == 0) layout.first_idat = off;
    first = false;
    off += 12 + len;
    if (name == "IEND") break;
  }
  if (layout.first_idat == 0) throw ParseError(source, ParseError::Unit::kByte, off, "PNG has no image data");
  return layout;
}

}  // namespace

DenseDepthImage decode_depth_png(std::span<const std::byte> bytes, const std::string& source) {
  const PngLayout layout = walk_png_chunks(bytes, source);
  // IHDR data starts at byte 16: width, height, bit depth (24), colour type (25).
  constexpr std::size_t kIhdr = 16;
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw ParseError(source, ParseError::Unit::kByte, kIhdr, "PNG: " + msg);
  }
  if ((image.format & PNG_FORMAT_FLAG_COLOR) != 0 || (image.format & PNG_FORMAT_FLAG_LINEAR) == 0) {
    png_image_free(&image);
    throw ParseError(source, ParseError::Unit::kByte, kIhdr + 8, "PNG depth must be 16-bit grayscale");
  }
  if (image.width == 0 || image.height == 0 || static_cast<std::uint64_t>(image.width) * image.height > (1u << 28)) {
    png_image_free(&image);
    throw ParseError(source, ParseError::Unit::kByte, kIhdr, "PNG dimensions out of range");
  }
  image.format = PNG_FORMAT_LINEAR_Y;
  std::vector<std::uint16_t> buf(static_cast<std::size_t>(image.width) * image.height);
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw ParseError(source, ParseError::Unit::kByte, layout.first_idat, "PNG: " + msg);
  }
  DenseDepthImage d{static_cast<int>(image.height), static_cast<int>(image.width), std::vector<float>(buf.size())};
  for (std::size_t i = 0; i < buf.size(); ++i) d.depth[i] = static_cast<float>(buf[i]) / 256.0f;
  return d;
}

std::vector<std::byte> encode_depth_png(const DenseDepthImage& d) {
  std::vector<std::uint16_t> buf(d.depth.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const float v = d.depth[i];
    buf[i] = std::isfinite(v) && v > 0.0f ? static_cast<std::uint16_t>(std::clamp(std::lround(v * 256.0f), 1L, 65535L)) : 0;
  }
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(d.width);
  image.height = static_cast<png_uint_32>(d.height);
  image.format = PNG_FORMAT_LINEAR_Y;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, buf.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode: ") + image.message);
  }
  std::vector<std::byte> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, buf.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode: ") + image.message);
  }
  out.resize(size);
  return out;
}

DenseDepthImage read_depth_image(const fs::path& path) {
  if (path.extension() == ".png") return decode_depth_png(read_file_bytes(path), path.string());
  return read_dense_depth(path);
}

// ---------------------------------------------------------------------------
// MLP parameters

namespace {
constexpr char kMlpMagic[8] = {'M', 'M', 'F', 'M', 'L', 'P', '0', '1'};
}

std::vector<std::byte> serialize_mlp(const FusionMLP& mlp) {
  mlp.validate();
  nlohmann::ordered_json h;
  h["layer_sizes"] = mlp.sizes();
  h["activation"] = "relu";
  h["dtype"] = "float32";
  h["layout"] = "per layer: weight [out][in] row-major, then bias [out]";
  const std::string header = h.dump();
  std::vector<std::byte> out(12 + header.size() + 4 * mlp.parameter_count());
  std::memcpy(out.data(), kMlpMagic, 8);
  store_u32(out.data() + 8, static_cast<std::uint32_t>(header.size()));
  std::memcpy(out.data() + 12, header.data(), header.size());
  std::byte* p = out.data() + 12 + header.size();
  for (const auto& l : mlp.layers) {
    for (double w : l.weight) {
      store_f32(p, static_cast<float>(w));
      p += 4;
    }
    for (double b : l.bias) {
      store_f32(p, static_cast<float>(b));
      p += 4;
    }
  }
  return out;
}

FusionMLP parse_mlp(std::span<const std::byte> bytes, const std::string& source) {
  if (bytes.size() < 12) throw ParseError(source, ParseError::Unit::kByte, bytes.size(), "file shorter than the 12-byte preamble");
  if (std::memcmp(bytes.data(), kMlpMagic, 8) != 0) throw ParseError(source, ParseError::Unit::kByte, 0, "bad magic");
  const std::uint32_t len = load_u32(bytes.data() + 8);
  if (len > bytes.size() - 12) throw ParseError(source, ParseError::Unit::kByte, 8, "header length exceeds file size");
  const nlohmann::json h =
      parse_json_document(std::string_view(reinterpret_cast<const char*>(bytes.data() + 12), len), source, 12);
  if (!h.is_object() || !h.contains("layer_sizes") || !h["layer_sizes"].is_array() || h["layer_sizes"].size() < 2 ||
      h["layer_sizes"].size() > 64) {
    throw ParseError(source, ParseError::Unit::kByte, 12, "header needs layer_sizes with 2..64 entries");
  }
  std::vector<int> sizes;
  for (const auto& s : h["layer_sizes"]) {
    if (!s.is_number_integer() || s.get<std::int64_t>() <= 0 || s.get<std::int64_t>() > 65536) {
      throw ParseError(source, ParseError::Unit::kByte, 12, "layer sizes must be integers in [1, 65536]");
    }
    sizes.push_back(s.get<int>());
  }
  if (h.contains("dtype") && h["dtype"] != "float32") throw ParseError(source, ParseError::Unit::kByte, 12, "dtype must be float32");
  std::uint64_t params = 0;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) params += static_cast<std::uint64_t>(sizes[i]) * sizes[i + 1] + sizes[i + 1];
  const std::uint64_t blob = bytes.size() - 12 - len;
  if (blob != params * 4) {
    throw ParseError(source, ParseError::Unit::kByte, 12 + len,
                     "parameter blob holds " + std::to_string(blob) + " bytes, expected " + std::to_string(params * 4));
  }
  FusionMLP mlp = FusionMLP::zeros(sizes);
  const std::byte* p = bytes.data() + 12 + len;
  auto next = [&]() {
    const float v = load_f32(p);
    if (!std::isfinite(v)) {
      throw ParseError(source, ParseError::Unit::kByte, static_cast<std::uint64_t>(p - bytes.data()), "non-finite parameter");
    }
    p += 4;
    return static_cast<double>(v);
  };
  for (auto& l : mlp.layers) {
    for (auto& w : l.weight) w = next();
    for (auto& b : l.bias) b = next();
  }
  return mlp;
}

void write_mlp(const fs::path& path, const FusionMLP& mlp) { write_file_bytes(path, serialize_mlp(mlp)); }

FusionMLP read_mlp(const fs::path& path) { return parse_mlp(read_file_bytes(path), path.string()); }

}  // namespace mmf
