#include "mmf/fuse.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "mmf/errors.hpp"
#include "mmf/random.hpp"
#include "mmf/spatial_hash.hpp"

namespace mmf {

FeatureMap aggregate_multiscale(std::span<const FeatureMap> maps) {
  if (maps.empty()) throw ConfigError("aggregate_multiscale: no maps");
  const FeatureMap& base = maps.front();
  for (const auto& m : maps) {
    if (m.channels() != base.channels()) throw ConfigError("aggregate_multiscale: channel counts differ");
    if (!(m.stride > 0.0)) throw ConfigError("aggregate_multiscale: strides must be positive");
    if (m.stride < base.stride) throw ConfigError("aggregate_multiscale: first map must be the finest");
    if (m.rows() <= 0 || m.cols() <= 0) throw ConfigError("aggregate_multiscale: empty map");
  }
  FeatureMap out{Tensor3<float>(base.channels(), base.rows(), base.cols()), base.stride, base.origin_x,
                 base.origin_y};
  const int rows = base.rows();
  const int cols = base.cols();
  const int channels = base.channels();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double py = (r + 0.5) * base.stride - 0.5;
      const double px = (c + 0.5) * base.stride - 0.5;
      for (int ch = 0; ch < channels; ++ch) {
        double acc = 0.0;
        for (const auto& m : maps) {
          acc += bilinear_sample(m.values.view(), ch, m.pixel_to_cell(py), m.pixel_to_cell(px));
        }
        out.values.at(ch, r, c) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

std::size_t CorrespondenceMap::matched() const {
  return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const auto& c) { return c.has_value(); }));
}

std::vector<Point3D> canonical_sort(std::span<const Point3D> points) {
  std::vector<Point3D> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    if (p.finite()) out.push_back(p);
  }
  std::sort(out.begin(), out.end(),
            [](const Point3D& a, const Point3D& b) { return std::tie(a.x, a.y, a.z) < std::tie(b.x, b.y, b.z); });
  return out;
}

CorrespondenceMap build_correspondence_map(std::span<const Point3D> points_true,
                                           std::span<const Point3D> points_pseudo,
                                           const CalibrationProfile& calib, const VoxelGridConfig& bev_cfg,
                                           const ImageMapShape& image_map, const CorrespondenceOptions& opts) {
  bev_cfg.validate();
  calib.validate();
  if (!(opts.radius > 0.0)) throw ConfigError("correspondence radius must be positive");
  if (image_map.rows <= 0 || image_map.cols <= 0 || !(image_map.stride > 0.0)) {
    throw ConfigError("image feature map shape must be positive");
  }
  const auto sorted_true = canonical_sort(points_true);
  const auto sorted_pseudo = canonical_sort(points_pseudo);
  const UniformGrid2D grid_true(sorted_true, opts.radius, bev_cfg.x.min, bev_cfg.y.min, bev_cfg.x.max, bev_cfg.y.max);
  const UniformGrid2D grid_pseudo(sorted_pseudo, opts.radius, bev_cfg.x.min, bev_cfg.y.min, bev_cfg.x.max,
                                  bev_cfg.y.max);

  CorrespondenceMap out{bev_cfg.ny, bev_cfg.nx,
                        std::vector<std::optional<Correspondence>>(static_cast<std::size_t>(bev_cfg.ny) * bev_cfg.nx)};
  const double max_u = calib.image_size.width - 0.5;
  const double max_v = calib.image_size.height - 0.5;
  const int rows = bev_cfg.ny;
  const int cols = bev_cfg.nx;

#pragma omp parallel for schedule(dynamic, 4)
  for (int iy = 0; iy < rows; ++iy) {
    for (int ix = 0; ix < cols; ++ix) {
      const Vec2 center = bev_cfg.cell_center(ix, iy);
      PointSource source = PointSource::kTrueLidar;
      auto hit = grid_true.nearest(center.x, center.y, opts.radius);
      const Point3D* pt = nullptr;
      if (hit) {
        pt = &sorted_true[*hit];
      } else if ((hit = grid_pseudo.nearest(center.x, center.y, opts.radius))) {
        source = PointSource::kPseudo;
        pt = &sorted_pseudo[*hit];
      } else {
        continue;
      }
      const auto px = project_to_image(transform_to_camera(*pt, calib), calib);
      if (!px || !(px->x >= -0.5) || !(px->x < max_u) || !(px->y >= -0.5) || !(px->y < max_v)) continue;
      Correspondence c;
      c.source = source;
      c.point_index = *hit;
      c.row = std::clamp((px->y + 0.5) / image_map.stride - 0.5, 0.0, image_map.rows - 1.0);
      c.col = std::clamp((px->x + 0.5) / image_map.stride - 0.5, 0.0, image_map.cols - 1.0);
      const double dx = pt->x - center.x;
      const double dy = pt->y - center.y;
      const double dz = pt->z;
      if (opts.mode == GeometricFeatureMode::kOffset) {
        c.geometric = {dx, dy, dz};
      } else {
        c.geometric = {std::sqrt(dx * dx + dy * dy + dz * dz), 0.0, 0.0};
      }
      out.cells[static_cast<std::size_t>(iy) * cols + ix] = c;
    }
  }
  return out;
}

std::vector<int> FusionMLP::sizes() const {
  std::vector<int> s;
  if (layers.empty()) return s;
  s.push_back(layers.front().in);
  for (const auto& l : layers) s.push_back(l.out);
  return s;
}

std::size_t FusionMLP::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void FusionMLP::validate() const {
  if (layers.empty()) throw ConfigError("FusionMLP: no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.in <= 0 || l.out <= 0) throw ConfigError("FusionMLP: layer sizes must be positive");
    if (l.weight.size() != static_cast<std::size_t>(l.in) * l.out || l.bias.size() != static_cast<std::size_t>(l.out)) {
      throw ConfigError("FusionMLP: parameter count does not match layer " + std::to_string(i));
    }
    if (i > 0 && layers[i - 1].out != l.in) throw ConfigError("FusionMLP: layer sizes do not chain");
    for (double v : l.weight) {
      if (!std::isfinite(v)) throw ConfigError("FusionMLP: non-finite weight");
    }
    for (double v : l.bias) {
      if (!std::isfinite(v)) throw ConfigError("FusionMLP: non-finite bias");
    }
  }
}

FusionMLP FusionMLP::zeros(const std::vector<int>& sizes) {
  if (sizes.size() < 2) throw ConfigError("FusionMLP: need at least input and output size");
  FusionMLP mlp;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    if (sizes[i] <= 0 || sizes[i + 1] <= 0) throw ConfigError("FusionMLP: layer sizes must be positive");
    DenseLayer l;
    l.in = sizes[i];
    l.out = sizes[i + 1];
    l.weight.assign(static_cast<std::size_t>(l.in) * l.out, 0.0);
    l.bias.assign(l.out, 0.0);
    mlp.layers.push_back(std::move(l));
  }
  return mlp;
}

FusionMLP FusionMLP::random(const std::vector<int>& sizes, std::uint64_t seed) {
  FusionMLP mlp = zeros(sizes);
  Rng rng(seed);
  for (auto& l : mlp.layers) {
    const double bound = std::sqrt(6.0 / l.in);
    for (auto& w : l.weight) w = rng.uniform(-bound, bound);
    for (auto& b : l.bias) b = rng.uniform(-0.1, 0.1);
  }
  return mlp;
}

namespace {

void check_input(const FusionMLP& mlp, std::span<const double> input) {
  if (mlp.layers.empty()) throw ConfigError("FusionMLP: no layers");
  if (input.size() != static_cast<std::size_t>(mlp.input_size())) {
    throw ConfigError("FusionMLP: input has " + std::to_string(input.size()) + " values, expected " +
                      std::to_string(mlp.input_size()));
  }
}

// Pre-activations of every layer; returns the final output.
std::vector<double> forward_impl(const FusionMLP& mlp, std::span<const double> input,
                                 std::vector<std::vector<double>>* activations) {
  std::vector<double> x(input.begin(), input.end());
  for (std::size_t li = 0; li < mlp.layers.size(); ++li) {
    const auto& l = mlp.layers[li];
    if (activations) activations->push_back(x);
    std::vector<double> y(l.out);
    for (int o = 0; o < l.out; ++o) {
      double acc = l.bias[o];
      const double* w = l.weight.data() + static_cast<std::size_t>(o) * l.in;
      for (int i = 0; i < l.in; ++i) acc += w[i] * x[i];
      y[o] = acc;
    }
    if (li + 1 < mlp.layers.size()) {
      for (auto& v : y) v = v > 0.0 ? v : 0.0;
    }
    x = std::move(y);
  }
  return x;
}

}  // namespace

std::vector<double> mlp_forward(const FusionMLP& mlp, std::span<const double> input) {
  check_input(mlp, input);
  return forward_impl(mlp, input, nullptr);
}

MlpGradients mlp_forward_backward(const FusionMLP& mlp, std::span<const double> input,
                                  std::span<const double> upstream) {
  check_input(mlp, input);
  if (upstream.size() != static_cast<std::size_t>(mlp.output_size())) {
    throw ConfigError("FusionMLP: upstream gradient size does not match the output");
  }
  std::vector<std::vector<double>> acts;
  MlpGradients g;
  g.output = forward_impl(mlp, input, &acts);
  g.parameter_gradients.resize(mlp.layers.size());

  std::vector<double> delta(upstream.begin(), upstream.end());
  for (std::size_t k = mlp.layers.size(); k-- > 0;) {
    const auto& l = mlp.layers[k];
    const auto& x = acts[k];
    // Gate by the rectifier of this layer's output (all but the last layer).
    if (k + 1 < mlp.layers.size()) {
      const auto& next_in = acts[k + 1];
      for (int o = 0; o < l.out; ++o) {
        if (!(next_in[o] > 0.0)) delta[o] = 0.0;
      }
    }
    auto& pg = g.parameter_gradients[k];
    pg.in = l.in;
    pg.out = l.out;
    pg.weight.assign(l.weight.size(), 0.0);
    pg.bias.assign(l.out, 0.0);
    std::vector<double> prev(l.in, 0.0);
    for (int o = 0; o < l.out; ++o) {
      pg.bias[o] = delta[o];
      const std::size_t row = static_cast<std::size_t>(o) * l.in;
      for (int i = 0; i < l.in; ++i) {
        pg.weight[row + i] = delta[o] * x[i];
        prev[i] += l.weight[row + i] * delta[o];
      }
    }
    delta = std::move(prev);
  }
  g.input_gradient = std::move(delta);
  return g;
}

std::vector<double> fusion_input(const FeatureMap& image, const Correspondence& c) {
  std::vector<double> in(image.channels() + 3);
  const auto view = image.values.view();
  for (int ch = 0; ch < image.channels(); ++ch) in[ch] = bilinear_sample(view, ch, c.row, c.col);
  for (int k = 0; k < 3; ++k) in[image.channels() + k] = c.geometric[k];
  return in;
}

namespace {

void check_fuse(const FeatureMap& bev, const FeatureMap& image, const CorrespondenceMap& corr,
                const FusionMLP& mlp) {
  mlp.validate();
  if (mlp.input_size() != image.channels() + 3) {
    throw ConfigError("continuous_fuse: MLP input must equal image channels + 3");
  }
  if (mlp.output_size() != bev.channels()) throw ConfigError("continuous_fuse: MLP output must equal BEV channels");
  if (corr.rows != bev.rows() || corr.cols != bev.cols() ||
      corr.cells.size() != static_cast<std::size_t>(corr.rows) * corr.cols) {
    throw ConfigError("continuous_fuse: correspondence map does not match the BEV grid");
  }
}

void fuse_cell(FeatureMap& out, const FeatureMap& image, const Correspondence& c, const FusionMLP& mlp, int r,
               int col) {
  const auto in = fusion_input(image, c);
  const auto delta = mlp_forward(mlp, in);
  for (int ch = 0; ch < out.channels(); ++ch) {
    out.values.at(ch, r, col) = static_cast<float>(out.values.at(ch, r, col) + delta[ch]);
  }
}

}  // namespace

FeatureMap continuous_fuse(const FeatureMap& bev, const FeatureMap& image, const CorrespondenceMap& corr,
                           const FusionMLP& mlp) {
  check_fuse(bev, image, corr, mlp);
  FeatureMap out = bev;
  const int rows = bev.rows();
  const int cols = bev.cols();
#pragma omp parallel for schedule(dynamic, 4)
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const auto& rec = corr.at(r, c);
      if (rec) fuse_cell(out, image, *rec, mlp, r, c);
    }
  }
  return out;
}

FeatureMap continuous_fuse_serial(const FeatureMap& bev, const FeatureMap& image, const CorrespondenceMap& corr,
                                  const FusionMLP& mlp) {
  check_fuse(bev, image, corr, mlp);
  FeatureMap out = bev;
  for (int r = 0; r < bev.rows(); ++r) {
    for (int c = 0; c < bev.cols(); ++c) {
      const auto& rec = corr.at(r, c);
      if (rec) fuse_cell(out, image, *rec, mlp, r, c);
    }
  }
  return out;
}

}  // namespace mmf
