#include "mmf/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <tuple>

#include "mmf/depth.hpp"
#include "mmf/fuse.hpp"
#include "mmf/roi.hpp"
#include "mmf/synth.hpp"
#include "mmf/voxel.hpp"

namespace mmf::checks {
namespace {

// Local-frame containment, written independently of the library helpers.
bool inside_bev(const OrientedBoxBEV& b, double x, double y) {
  const double dx = x - b.x;
  const double dy = y - b.y;
  const double u = std::cos(b.yaw) * dx + std::sin(b.yaw) * dy;
  const double v = -std::sin(b.yaw) * dx + std::cos(b.yaw) * dy;
  return std::abs(u) <= 0.5 * b.l && std::abs(v) <= 0.5 * b.w;
}

struct Bounds {
  double lo[3];
  double hi[3];
};

void grow(Bounds& bb, const OrientedBoxBEV& b) {
  const double r = 0.5 * std::hypot(b.w, b.l);
  bb.lo[0] = std::min(bb.lo[0], b.x - r);
  bb.hi[0] = std::max(bb.hi[0], b.x + r);
  bb.lo[1] = std::min(bb.lo[1], b.y - r);
  bb.hi[1] = std::max(bb.hi[1], b.y + r);
}

double rel_err(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}); }

CheckResult make(std::string name, double value, double tol, bool passed, std::string detail = {}) {
  return {std::move(name), passed, value, tol, std::move(detail)};
}

}  // namespace

std::string format_result(const CheckResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "[%s] %-34s value=%-12.6g tol=%-10.3g %s", r.passed ? "PASS" : "FAIL",
                r.name.c_str(), r.value, r.tolerance, r.detail.c_str());
  return buf;
}

// ---------------------------------------------------------------------------
// Monte-Carlo IoU. Jittered stratified sampling: one uniform draw per cell of a
// k x k (x k) lattice over the union's bounding box.

double monte_carlo_iou_bev(const OrientedBoxBEV& a, const OrientedBoxBEV& b, std::int64_t samples, Rng& rng) {
  Bounds bb{{1e300, 1e300, 0}, {-1e300, -1e300, 0}};
  grow(bb, a);
  grow(bb, b);
  const auto k = static_cast<std::int64_t>(std::floor(std::sqrt(static_cast<double>(samples))));
  const double sx = (bb.hi[0] - bb.lo[0]) / k;
  const double sy = (bb.hi[1] - bb.lo[1]) / k;
  std::int64_t in_a = 0, in_b = 0, both = 0;
  for (std::int64_t i = 0; i < k; ++i) {
    for (std::int64_t j = 0; j < k; ++j) {
      const double x = bb.lo[0] + (i + rng.uniform()) * sx;
      const double y = bb.lo[1] + (j + rng.uniform()) * sy;
      const bool ia = inside_bev(a, x, y);
      const bool ib = inside_bev(b, x, y);
      in_a += ia;
      in_b += ib;
      both += ia && ib;
    }
  }
  const std::int64_t uni = in_a + in_b - both;
  return uni > 0 ? static_cast<double>(both) / static_cast<double>(uni) : 0.0;
}

double monte_carlo_iou_3d(const Box3D& a, const Box3D& b, std::int64_t samples, Rng& rng) {
  const OrientedBoxBEV fa{a.x, a.y, a.w, a.l, a.yaw};
  const OrientedBoxBEV fb{b.x, b.y, b.w, b.l, b.yaw};
  Bounds bb{{1e300, 1e300, 1e300}, {-1e300, -1e300, -1e300}};
  grow(bb, fa);
  grow(bb, fb);
  bb.lo[2] = std::min(a.z - 0.5 * a.h, b.z - 0.5 * b.h);
  bb.hi[2] = std::max(a.z + 0.5 * a.h, b.z + 0.5 * b.h);
  const auto k = static_cast<std::int64_t>(std::floor(std::cbrt(static_cast<double>(samples))));
  const double s[3] = {(bb.hi[0] - bb.lo[0]) / k, (bb.hi[1] - bb.lo[1]) / k, (bb.hi[2] - bb.lo[2]) / k};
  std::int64_t in_a = 0, in_b = 0, both = 0;
  for (std::int64_t i = 0; i < k; ++i) {
    for (std::int64_t j = 0; j < k; ++j) {
      for (std::int64_t m = 0; m < k; ++m) {
        const double x = bb.lo[0] + (i + rng.uniform()) * s[0];
        const double y = bb.lo[1] + (j + rng.uniform()) * s[1];
        const double z = bb.lo[2] + (m + rng.uniform()) * s[2];
        const bool ia = std::abs(z - a.z) <= 0.5 * a.h && inside_bev(fa, x, y);
        const bool ib = std::abs(z - b.z) <= 0.5 * b.h && inside_bev(fb, x, y);
        in_a += ia;
        in_b += ib;
        both += ia && ib;
      }
    }
  }
  const std::int64_t uni = in_a + in_b - both;
  return uni > 0 ? static_cast<double>(both) / static_cast<double>(uni) : 0.0;
}

// ---------------------------------------------------------------------------
// AP oracle

std::vector<MatchFlag> brute_force_flags(const FrameInput& frame, const EvalConfig& cfg, int class_id,
                                         std::size_t* counted_gt) {
  const double thr = cfg.threshold_for(class_id);
  const auto lim = difficulty_limits(cfg.difficulty);
  const std::size_t G = frame.ground_truth.size();
  std::vector<int> state(G, -1);  // -1 other class, 0 counted, 1 ignored
  std::size_t counted = 0;
  for (std::size_t g = 0; g < G; ++g) {
    const auto& gt = frame.ground_truth[g];
    if (gt.class_id != class_id) continue;
    const bool easy_enough = gt.box2d.h >= lim.min_height_px && gt.occlusion <= lim.max_occlusion &&
                             gt.truncation <= lim.max_truncation;
    state[g] = easy_enough ? 0 : 1;
    counted += easy_enough;
  }
  if (counted_gt) *counted_gt = counted;

  // Selection sort by score, earliest index first among equals.
  std::vector<std::size_t> pending;
  for (std::size_t d = 0; d < frame.detections.size(); ++d) {
    if (frame.detections[d].class_id == class_id) pending.push_back(d);
  }
  std::vector<MatchFlag> flags(frame.detections.size(), MatchFlag::kFP);
  std::vector<bool> used(G, false);
  while (!pending.empty()) {
    std::size_t pick = 0;
    for (std::size_t i = 1; i < pending.size(); ++i) {
      if (frame.detections[pending[i]].score > frame.detections[pending[pick]].score) pick = i;
    }
    const std::size_t d = pending[pick];
    pending.erase(pending.begin() + static_cast<std::ptrdiff_t>(pick));
    const Box2D rect = frame.det_rects.empty() ? Box2D{} : frame.det_rects[d];
    std::vector<std::pair<double, std::size_t>> candidates;
    bool ignored_hit = false;
    for (std::size_t g = 0; g < G; ++g) {
      if (state[g] < 0) continue;
      const double iou = overlap(cfg.overlap, frame.detections[d], rect, frame.ground_truth[g]);
      if (!(iou >= thr)) continue;
      if (state[g] == 1) {
        ignored_hit = true;
      } else if (!used[g]) {
        candidates.push_back({-iou, g});
      }
    }
    if (!candidates.empty()) {
      const auto best = *std::min_element(candidates.begin(), candidates.end());
      used[best.second] = true;
      flags[d] = MatchFlag::kTP;
    } else if (ignored_hit) {
      flags[d] = MatchFlag::kIgnored;
    }
  }
  return flags;
}

double brute_force_ap(const std::vector<ScoredFlag>& flags, std::size_t counted_gt) {
  if (counted_gt == 0) return 0.0;
  std::vector<std::size_t> idx(flags.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return flags[a].score > flags[b].score; });
  std::vector<std::pair<double, double>> pts;  // recall, precision
  double tp = 0.0, fp = 0.0;
  for (const std::size_t i : idx) {
    if (flags[i].flag == MatchFlag::kIgnored) continue;
    if (flags[i].flag == MatchFlag::kTP) {
      tp += 1.0;
    } else {
      fp += 1.0;
    }
    pts.push_back({tp / static_cast<double>(counted_gt), tp / (tp + fp)});
  }
  double sum = 0.0;
  for (int s = 0; s <= 10; ++s) {
    const double r = s / 10.0;
    double best = 0.0;
    for (const auto& [rec, prec] : pts) {
      if (rec >= r) best = std::max(best, prec);
    }
    sum += best;
  }
  return sum / 11.0;
}

// ---------------------------------------------------------------------------
// NMS oracle

DetectionSet reference_nms(const DetectionSet& dets, const NmsOptions& opts) {
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].score >= opts.score_threshold) rest.push_back(i);
  }
  DetectionSet kept;
  while (!rest.empty()) {
    std::size_t pick = 0;
    for (std::size_t i = 1; i < rest.size(); ++i) {
      if (dets[rest[i]].score > dets[rest[pick]].score) pick = i;
    }
    const Detection top = dets[rest[pick]];
    kept.push_back(top);
    rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(pick));
    std::vector<std::size_t> survivors;
    for (const std::size_t i : rest) {
      const bool same = dets[i].class_id == top.class_id;
      if (!same || rotated_iou_bev(box3d_to_bev(top.box), box3d_to_bev(dets[i].box)) < opts.iou_threshold) {
        survivors.push_back(i);
      }
    }
    rest.swap(survivors);
  }
  return kept;
}

OrientedBoxBEV random_bev_box(Rng& rng, double spread) {
  return {rng.uniform(-spread, spread), rng.uniform(-spread, spread), rng.uniform(0.5, 3.0), rng.uniform(0.5, 5.0),
          rng.uniform(-kPi, kPi)};
}

Box3D random_box3d(Rng& rng, double spread) {
  const auto b = random_bev_box(rng, spread);
  return {b.x, b.y, rng.uniform(-0.5, 0.5), b.w, b.l, rng.uniform(0.5, 2.0), b.yaw};
}

// ---------------------------------------------------------------------------
// Runners

CheckResult check_rotated_iou(int pairs, std::int64_t samples, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  int overlapping = 0;
  for (int i = 0; i < pairs; ++i) {
    const auto a = random_bev_box(rng, 1.0);
    auto b = random_bev_box(rng, 1.0);
    if (i % 10 == 0) {
      b.x = a.x;
      b.y = a.y;
    }
    const double exact = rotated_iou_bev(a, b);
    overlapping += exact > 0.0;
    worst = std::max(worst, std::abs(exact - monte_carlo_iou_bev(a, b, samples, rng)));
  }
  char d[96];
  std::snprintf(d, sizeof d, "%d pairs (%d overlapping), %lld samples each", pairs, overlapping,
                static_cast<long long>(samples));
  return make("rotated IoU vs Monte-Carlo", worst, 3e-3, worst <= 3e-3, d);
}

CheckResult check_rotated_iou_45deg() {
  const double iou = rotated_iou_bev({0, 0, 1, 1, 0}, {0, 0, 1, 1, 0.25 * kPi});
  const double err = std::abs(iou - 0.7071);
  char d[64];
  std::snprintf(d, sizeof d, "IoU = %.6f, expected 0.7071", iou);
  return make("rotated IoU 45-degree squares", err, 3e-3, err <= 3e-3, d);
}

CheckResult check_iou_3d(int pairs, std::int64_t samples, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  int overlapping = 0;
  for (int i = 0; i < pairs; ++i) {
    const auto a = random_box3d(rng, 1.0);
    auto b = random_box3d(rng, 1.0);
    if (i % 10 == 0) {
      b.x = a.x;
      b.y = a.y;
    }
    const double exact = iou_3d(a, b);
    overlapping += exact > 0.0;
    worst = std::max(worst, std::abs(exact - monte_carlo_iou_3d(a, b, samples, rng)));
  }
  char d[96];
  std::snprintf(d, sizeof d, "%d pairs (%d overlapping), %lld samples each", pairs, overlapping,
                static_cast<long long>(samples));
  return make("3D IoU vs Monte-Carlo", worst, 3e-3, worst <= 3e-3, d);
}

CheckResult check_roi_gradients(int configs, std::uint64_t seed) {
  Rng rng(seed);
  constexpr double h = 1e-5;
  double worst = 0.0;
  for (int cfg = 0; cfg < configs; ++cfg) {
    const int C = static_cast<int>(rng.integer(1, 3));
    const int rows = static_cast<int>(rng.integer(6, 14));
    const int cols = static_cast<int>(rng.integer(6, 14));
    const double stride = rng.uniform() < 0.5 ? 0.5 : 1.0;
    const double ox = rng.uniform(-5.0, 5.0);
    const double oy = rng.uniform(-5.0, 5.0);
    Tensor3<double> map(C, rows, cols);
    for (auto& v : map.data) v = rng.normal();
    OrientedROI roi;
    roi.box = {ox + rng.uniform(0.2, 0.8) * cols * stride, oy + rng.uniform(0.2, 0.8) * rows * stride,
               rng.uniform(0.5, 3.0), rng.uniform(1.0, 5.0), rng.uniform(-kPi, kPi)};
    roi.grid_n = static_cast<int>(rng.integer(2, 7));
    const auto f = extract_oriented_roi(map.view(), stride, ox, oy, roi);
    Tensor3<double> up(C, roi.grid_n, roi.grid_n);
    for (auto& v : up.data) v = rng.normal();
    const auto analytic = f.backward(up);
    auto loss = [&](const Tensor3<double>& m) {
      const auto g = extract_oriented_roi(m.view(), stride, ox, oy, roi);
      double acc = 0.0;
      for (std::size_t k = 0; k < g.values.data.size(); ++k) acc += up.data[k] * g.values.data[k];
      return acc;
    };
    for (std::size_t k = 0; k < map.data.size(); ++k) {
      Tensor3<double> m = map;
      m.data[k] = map.data[k] + h;
      const double fp = loss(m);
      m.data[k] = map.data[k] - h;
      const double fm = loss(m);
      worst = std::max(worst, rel_err(analytic.data[k], (fp - fm) / (2.0 * h)));
    }
  }
  char d[64];
  std::snprintf(d, sizeof d, "%d configurations, step 1e-5", configs);
  return make("ROI extraction gradient", worst, 1e-4, worst < 1e-4, d);
}

namespace {

// Hidden pre-activations of a ReLU stack, recomputed from scratch.
double min_abs_preactivation(const FusionMLP& mlp, const std::vector<double>& x) {
  std::vector<double> a = x;
  double smallest = 1e300;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const auto& L = mlp.layers[l];
    std::vector<double> z(L.out);
    for (int o = 0; o < L.out; ++o) {
      double acc = L.bias[o];
      for (int i = 0; i < L.in; ++i) acc += L.weight[static_cast<std::size_t>(o) * L.in + i] * a[i];
      z[o] = acc;
    }
    if (l + 1 < mlp.layers.size()) {
      for (auto& v : z) {
        smallest = std::min(smallest, std::abs(v));
        v = std::max(v, 0.0);
      }
    }
    a = z;
  }
  return smallest;
}

}  // namespace

CheckResult check_mlp_gradients(int configs, std::uint64_t seed) {
  Rng rng(seed);
  constexpr double h = 1e-5;
  double worst = 0.0;
  int nudged = 0;
  for (int cfg = 0; cfg < configs; ++cfg) {
    std::vector<int> sizes{static_cast<int>(rng.integer(2, 8))};
    const int hidden = static_cast<int>(rng.integer(1, 2));
    for (int k = 0; k < hidden; ++k) sizes.push_back(static_cast<int>(rng.integer(2, 12)));
    sizes.push_back(static_cast<int>(rng.integer(1, 5)));
    FusionMLP mlp = FusionMLP::zeros(sizes);
    for (auto& L : mlp.layers) {
      for (auto& w : L.weight) w = 0.5 * rng.normal();
      for (auto& b : L.bias) b = 0.5 * rng.normal();
    }
    std::vector<double> x(sizes.front());
    // Redraw the input until every hidden unit is clear of the rectifier kink.
    for (int tries = 0;; ++tries) {
      for (auto& v : x) v = rng.normal();
      if (min_abs_preactivation(mlp, x) > 1e-2) break;
      ++nudged;
      if (tries > 1000) break;
    }
    std::vector<double> up(sizes.back());
    for (auto& v : up) v = rng.normal();
    const auto g = mlp_forward_backward(mlp, x, up);
    auto loss = [&](const FusionMLP& m, const std::vector<double>& in) {
      const auto y = mlp_forward(m, in);
      double acc = 0.0;
      for (std::size_t k = 0; k < y.size(); ++k) acc += up[k] * y[k];
      return acc;
    };
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      worst = std::max(worst, rel_err(g.input_gradient[i], (loss(mlp, xp) - loss(mlp, xm)) / (2.0 * h)));
    }
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
      for (std::size_t k = 0; k < mlp.layers[l].weight.size(); ++k) {
        auto mp = mlp, mm = mlp;
        mp.layers[l].weight[k] += h;
        mm.layers[l].weight[k] -= h;
        worst = std::max(worst, rel_err(g.parameter_gradients[l].weight[k], (loss(mp, x) - loss(mm, x)) / (2.0 * h)));
      }
      for (std::size_t k = 0; k < mlp.layers[l].bias.size(); ++k) {
        auto mp = mlp, mm = mlp;
        mp.layers[l].bias[k] += h;
        mm.layers[l].bias[k] -= h;
        worst = std::max(worst, rel_err(g.parameter_gradients[l].bias[k], (loss(mp, x) - loss(mm, x)) / (2.0 * h)));
      }
    }
  }
  char d[96];
  std::snprintf(d, sizeof d, "%d configurations, step 1e-5, %d input redraws", configs, nudged);
  return make("FusionMLP gradient", worst, 1e-4, worst < 1e-4, d);
}

namespace {

std::vector<Point3D> random_grid_points(int n, const VoxelGridConfig& g, Rng& rng) {
  std::vector<Point3D> pts(n);
  for (auto& p : pts) {
    // About 5% of the points fall outside the volume.
    p = {rng.uniform(g.x.min - 2.0, g.x.max + 2.0), rng.uniform(g.y.min - 2.0, g.y.max + 2.0),
         rng.uniform(g.z.min - 0.1, g.z.max + 0.1)};
  }
  return pts;
}

bool in_volume(const Point3D& p, const VoxelGridConfig& g) {
  return p.x >= g.x.min && p.x < g.x.max && p.y >= g.y.min && p.y < g.y.max && p.z >= g.z.min && p.z < g.z.max;
}

}  // namespace

CheckResult check_voxel_mass(int points, std::uint64_t seed) {
  Rng rng(seed);
  const VoxelGridConfig g;
  const auto pts = random_grid_points(points, g, rng);
  const auto t = voxelize_trilinear(pts, g);
  double mass = 0.0;
  for (float v : t.values.data) mass += v;
  std::size_t inside = 0;
  for (const auto& p : pts) inside += in_volume(p, g);
  const double err = std::abs(mass - static_cast<double>(inside)) / static_cast<double>(std::max<std::size_t>(inside, 1));
  char d[80];
  std::snprintf(d, sizeof d, "%d points, %zu inside, mass %.6f", points, inside, mass);
  return make("voxel mass conservation", err, 1e-6, err <= 1e-6, d);
}

CheckResult check_voxel_weights(int points, std::uint64_t seed) {
  Rng rng(seed);
  const VoxelGridConfig g;
  const auto pts = random_grid_points(points, g, rng);
  double worst = 0.0;
  bool ok = true;
  const std::uint64_t nodes = static_cast<std::uint64_t>(g.nx) * g.ny * g.nz;
  for (const auto& p : pts) {
    const auto w = trilinear_weights(p, g);
    if (w.has_value() != in_volume(p, g)) ok = false;
    if (!w) continue;
    double sum = 0.0;
    for (const auto& nw : *w) {
      if (nw.weight < 0.0 || nw.node >= nodes) ok = false;
      sum += nw.weight;
    }
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return make("voxel per-point weight sum", worst, 1e-12, ok && worst <= 1e-12,
              ok ? "weights non-negative, nodes in range" : "weight sign, node range or bounds mismatch");
}

CheckResult check_voxel_permutation(int points, std::uint64_t seed) {
  Rng rng(seed);
  const VoxelGridConfig g;
  auto pts = random_grid_points(points, g, rng);
  const auto base = voxelize_trilinear(pts, g);
  for (std::size_t i = pts.size(); i > 1; --i) {
    std::swap(pts[i - 1], pts[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i) - 1))]);
  }
  const auto shuffled = voxelize_trilinear(pts, g);
  const auto serial = voxelize_trilinear_serial(pts, g);
  const std::size_t bytes = base.values.data.size() * sizeof(float);
  const bool same = shuffled.values.data.size() == base.values.data.size() &&
                    std::memcmp(base.values.data.data(), shuffled.values.data.data(), bytes) == 0 &&
                    std::memcmp(base.values.data.data(), serial.values.data.data(), bytes) == 0;
  return make("voxel permutation bit-identity", same ? 0.0 : 1.0, 0.0, same,
              "shuffled input and serial reference compared bytewise");
}

namespace {

GroundTruthObject random_gt(Rng& rng) {
  GroundTruthObject g;
  g.box3d = random_box3d(rng, 6.0);
  g.box2d = {rng.uniform(0, 1000), rng.uniform(0, 300), rng.uniform(10, 100), rng.uniform(10, 60)};
  g.truncation = rng.uniform() < 0.8 ? rng.uniform(0.0, 0.2) : rng.uniform(0.2, 0.9);
  g.occlusion = static_cast<int>(rng.integer(0, 3));
  g.class_id = rng.uniform() < 0.8 ? 0 : 1;
  return g;
}

}  // namespace

CheckResult check_ap_oracle(int cases, std::uint64_t seed) {
  Rng rng(seed);
  int flag_mismatch = 0;
  int ap_mismatch = 0;
  double worst = 0.0;
  for (int c = 0; c < cases; ++c) {
    FrameInput f;
    const int G = static_cast<int>(rng.integer(0, 10));
    const int D = static_cast<int>(rng.integer(0, 20));
    for (int g = 0; g < G; ++g) f.ground_truth.push_back(random_gt(rng));
    for (int d = 0; d < D; ++d) {
      Detection det;
      if (G > 0 && rng.uniform() < 0.7) {
        det.box = f.ground_truth[static_cast<std::size_t>(rng.integer(0, G - 1))].box3d;
        det.box.x += 0.4 * rng.normal();
        det.box.y += 0.4 * rng.normal();
        det.box.yaw += 0.2 * rng.normal();
      } else {
        det.box = random_box3d(rng, 6.0);
      }
      // Quantised scores create ties.
      det.score = rng.uniform() < 0.3 ? std::round(rng.uniform() * 4.0) / 4.0 : rng.uniform();
      det.class_id = rng.uniform() < 0.85 ? 0 : 1;
      f.detections.push_back(det);
      f.det_rects.push_back({rng.uniform(0, 1000), rng.uniform(0, 300), rng.uniform(10, 100), rng.uniform(10, 60)});
    }
    EvalConfig cfg;
    cfg.overlap = static_cast<OverlapKind>(rng.integer(1, 2));
    cfg.difficulty = static_cast<Difficulty>(rng.integer(0, 2));
    cfg.default_iou_threshold = rng.uniform() < 0.5 ? 0.5 : 0.7;
    if (rng.uniform() < 0.3) cfg.default_iou_threshold = rng.uniform(0.1, 0.9);

    std::size_t counted = 0;
    const auto expect = brute_force_flags(f, cfg, 0, &counted);
    const auto got = match_detections(f, cfg, 0);
    if (got.counted_gt != counted) ++flag_mismatch;
    std::vector<ScoredFlag> scored;
    for (std::size_t d = 0; d < f.detections.size(); ++d) {
      if (f.detections[d].class_id != 0) continue;
      if (got.flags[d] != expect[d]) ++flag_mismatch;
      scored.push_back({f.detections[d].score, got.flags[d]});
    }
    const double ap_ref = brute_force_ap(scored, counted);
    const double ap = evaluate_class(std::span<const FrameInput>(&f, 1), cfg, 0).ap;
    if (ap != ap_ref) {
      ++ap_mismatch;
      worst = std::max(worst, std::abs(ap - ap_ref));
    }
  }
  char d[96];
  std::snprintf(d, sizeof d, "%d cases, %d flag and %d AP mismatches", cases, flag_mismatch, ap_mismatch);
  return make("AP evaluator vs brute force", worst, 0.0, flag_mismatch == 0 && ap_mismatch == 0, d);
}

CheckResult check_ap_hand_case() {
  // Two counted ground truths; the top detection finds one, the second is a false positive
  // and the other object is never found. Precision is 1 up to recall 0.5 and 0 beyond:
  // 6 of the 11 recall levels score 1.
  FrameInput f;
  GroundTruthObject a;
  a.box3d = {10.0, 0.0, 0.0, 1.8, 4.0, 1.5, 0.0};
  a.box2d = {100, 100, 80, 60};
  GroundTruthObject b = a;
  b.box3d.x = 20.0;
  f.ground_truth = {a, b};
  f.detections = {{a.box3d, 0.9, 0}, {Box3D{40.0, 5.0, 0.0, 1.8, 4.0, 1.5, 0.0}, 0.5, 0}};
  EvalConfig cfg;
  const double ap = evaluate_class(std::span<const FrameInput>(&f, 1), cfg, 0).ap;
  char d[64];
  std::snprintf(d, sizeof d, "AP = %.17g", ap);
  return make("AP hand case = 6/11", std::abs(ap - 6.0 / 11.0), 0.0, ap == 6.0 / 11.0, d);
}

CheckResult check_default_grid() {
  const VoxelGridConfig g;
  const bool ok = g.nx == 448 && g.ny == 512 && g.nz == 32 && g.edge_x() == 0.15625 && g.edge_y() == 0.15625 &&
                  g.x.min == 0.0 && g.x.max == 70.0 && g.y.min == -40.0 && g.y.max == 40.0;
  char d[96];
  std::snprintf(d, sizeof d, "%dx%dx%d (y, x, z), edges %.5f x %.5f m", g.ny, g.nx, g.nz, g.edge_y(), g.edge_x());
  return make("default grid 512x448x32", ok ? 0.0 : 1.0, 0.0, ok, d);
}

CheckResult check_sparse_depth(int points, std::uint64_t seed) {
  Rng rng(seed);
  const auto calib = default_synthetic_calibration();
  const int W = calib.image_size.width;
  const int H = calib.image_size.height;
  std::vector<Point3D> pts(points);
  for (auto& p : pts) {
    const double u = rng.uniform(-20.0, W + 20.0);
    const double v = rng.uniform(-20.0, H + 20.0);
    // Coarse depths make equal-depth collisions common.
    const double z = rng.uniform() < 0.2 ? std::round(rng.uniform(1.0, 80.0)) : rng.uniform(1.0, 80.0);
    p = transform_to_lidar(unproject_pixel(u, v, z, calib), calib);
  }
  const auto img = build_sparse_depth_image(pts, calib);

  // Oracle: winner per pixel by explicit (z, x, y) comparison.
  struct Win {
    bool set = false;
    double z = 0, x = 0, y = 0;
  };
  std::vector<Win> win(static_cast<std::size_t>(W) * H);
  for (const auto& p : pts) {
    const Point3D c = transform_to_camera(p, calib);
    if (!(c.z > 0.0)) continue;
    const double x = calib.intrinsics.fx * c.x / c.z + calib.intrinsics.cx;
    const double y = calib.intrinsics.fy * c.y / c.z + calib.intrinsics.cy;
    const double u = std::round(x);
    const double v = std::round(y);
    if (u < 0 || v < 0 || u >= W || v >= H) continue;
    auto& w = win[static_cast<std::size_t>(v) * W + static_cast<std::size_t>(u)];
    if (!w.set || std::tie(c.z, x, y) < std::tie(w.z, w.x, w.y)) w = {true, c.z, x, y};
  }
  const std::size_t plane = win.size();
  double worst_offset = 0.0;
  std::size_t bad = 0;
  std::size_t occupied = 0;
  for (std::size_t i = 0; i < plane; ++i) {
    const float dx = img.values.data[i];
    const float dy = img.values.data[plane + i];
    const float d = img.values.data[2 * plane + i];
    if (!win[i].set) {
      if (img.occupied[i] || dx != 0.0f || dy != 0.0f || d != 0.0f) ++bad;
      continue;
    }
    ++occupied;
    worst_offset = std::max({worst_offset, std::abs(static_cast<double>(dx)), std::abs(static_cast<double>(dy))});
    if (!img.occupied[i] || d != static_cast<float>(win[i].z / 10.0) ||
        dx != static_cast<float>(win[i].x - static_cast<double>(i % W)) ||
        dy != static_cast<float>(win[i].y - static_cast<double>(i / W))) {
      ++bad;
    }
  }
  char d[96];
  std::snprintf(d, sizeof d, "%d points, %zu occupied pixels, %zu mismatches", points, occupied, bad);
  return make("sparse depth offsets and depth", worst_offset, 0.5 + 1e-9, bad == 0 && worst_offset <= 0.5 + 1e-9, d);
}

namespace {

DetectionSet random_detections(Rng& rng, int n) {
  DetectionSet dets(n);
  for (auto& d : dets) {
    d.box = {rng.uniform(0.0, 30.0), rng.uniform(-10.0, 10.0), 0.0, rng.uniform(1.4, 2.0), rng.uniform(3.0, 5.0),
             1.5, rng.uniform(-kPi, kPi)};
    d.score = rng.uniform() < 0.3 ? std::round(rng.uniform() * 10.0) / 10.0 : rng.uniform();
    d.class_id = rng.uniform() < 0.8 ? 0 : 1;
  }
  return dets;
}

}  // namespace

CheckResult check_nms_reference(int sets, int detections, std::uint64_t seed) {
  Rng rng(seed);
  int mismatches = 0;
  for (int s = 0; s < sets; ++s) {
    const auto dets = random_detections(rng, detections);
    NmsOptions opts;
    opts.score_threshold = rng.uniform(0.0, 0.5);
    opts.iou_threshold = rng.uniform(0.1, 0.7);
    if (oriented_nms(dets, opts) != reference_nms(dets, opts)) ++mismatches;
  }
  char d[80];
  std::snprintf(d, sizeof d, "%d sets of %d detections, %d mismatches", sets, detections, mismatches);
  return make("oriented NMS vs reference", mismatches, 0.0, mismatches == 0, d);
}

CheckResult check_nms_idempotent(int sets, int detections, std::uint64_t seed) {
  Rng rng(seed);
  int failures = 0;
  for (int s = 0; s < sets; ++s) {
    const auto dets = random_detections(rng, detections);
    NmsOptions opts;
    opts.score_threshold = rng.uniform(0.0, 0.5);
    opts.iou_threshold = rng.uniform(0.1, 0.7);
    const auto once = oriented_nms(dets, opts);
    if (oriented_nms(once, opts) != once) ++failures;
  }
  char d[80];
  std::snprintf(d, sizeof d, "%d sets of %d detections, %d failures", sets, detections, failures);
  return make("oriented NMS idempotence", failures, 0.0, failures == 0, d);
}

std::vector<CheckResult> run_oracle_suite(std::uint64_t seed, double scale) {
  scale = std::clamp(scale, 1e-3, 1.0);
  auto n = [scale](int full) { return std::max(1, static_cast<int>(std::lround(full * scale))); };
  std::vector<CheckResult> out;
  out.push_back(check_rotated_iou(n(500), 1000000, mix_seed(seed, 1)));
  out.push_back(check_rotated_iou_45deg());
  out.push_back(check_iou_3d(n(200), 1000000, mix_seed(seed, 2)));
  out.push_back(check_roi_gradients(n(50), mix_seed(seed, 3)));
  out.push_back(check_mlp_gradients(n(50), mix_seed(seed, 4)));
  out.push_back(check_voxel_mass(n(100000), mix_seed(seed, 5)));
  out.push_back(check_voxel_weights(n(100000), mix_seed(seed, 6)));
  out.push_back(check_voxel_permutation(n(100000), mix_seed(seed, 7)));
  out.push_back(check_ap_oracle(n(1000), mix_seed(seed, 8)));
  out.push_back(check_ap_hand_case());
  out.push_back(check_default_grid());
  out.push_back(check_sparse_depth(n(100000), mix_seed(seed, 9)));
  out.push_back(check_nms_reference(n(500), 200, mix_seed(seed, 10)));
  out.push_back(check_nms_idempotent(n(500), 200, mix_seed(seed, 11)));
  return out;
}

}  // namespace mmf::checks
