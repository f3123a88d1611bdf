// Serial reference vs OpenMP kernel, on a synthetic frame at the default grid.

#include <benchmark/benchmark.h>
#include <omp.h>

#include "mmf/depth.hpp"
#include "mmf/features.hpp"
#include "mmf/fuse.hpp"
#include "mmf/post.hpp"
#include "mmf/random.hpp"
#include "mmf/synth.hpp"
#include "mmf/voxel.hpp"

namespace {

struct Fixture {
  mmf::Frame frame;
  std::vector<mmf::Point3D> points;
  mmf::VoxelGridConfig grid;
  mmf::FeatureMap bev;
  mmf::FeatureMap image;
  mmf::CorrespondenceMap corr;
  mmf::FusionMLP mlp;
  std::vector<mmf::OrientedBoxBEV> boxes;

  Fixture() {
    mmf::SceneSpec spec;
    spec.seed = 42;
    spec.min_boxes = spec.max_boxes = 12;
    spec.ground_density = 20.0;
    frame = mmf::synth_scene(spec);
    for (const auto& p : frame.points) points.push_back(p.p);
    const auto t = mmf::voxelize_trilinear(points, grid);
    bev = mmf::stub_bev_feature_map(t, 4);
    image = mmf::stub_image_feature_map(frame.points, frame.calib, &*frame.dense_depth, 4, 4);
    corr = mmf::build_correspondence_map(points, {}, frame.calib, grid,
                                         {image.values.rows, image.values.cols, image.stride});
    mlp = mmf::FusionMLP::random({image.values.channels + 3, 64, bev.values.channels}, 1);
    mmf::Rng rng(7);
    for (int i = 0; i < 400; ++i) {
      boxes.push_back({rng.uniform(0, 60), rng.uniform(-30, 30), rng.uniform(1.5, 2), rng.uniform(3.5, 5),
                       rng.uniform(-3.14, 3.14)});
    }
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void set_threads(const benchmark::State& state) { omp_set_num_threads(static_cast<int>(state.range(0))); }

void BM_VoxelizeSerial(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(mmf::voxelize_trilinear_serial(f.points, f.grid));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.points.size()));
}
void BM_VoxelizeOmp(benchmark::State& state) {
  const auto& f = fixture();
  set_threads(state);
  for (auto _ : state) benchmark::DoNotOptimize(mmf::voxelize_trilinear(f.points, f.grid));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.points.size()));
}

void BM_SparseDepthSerial(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(mmf::build_sparse_depth_image_serial(f.points, f.frame.calib));
}
void BM_SparseDepthOmp(benchmark::State& state) {
  const auto& f = fixture();
  set_threads(state);
  for (auto _ : state) benchmark::DoNotOptimize(mmf::build_sparse_depth_image(f.points, f.frame.calib));
}

void BM_FuseSerial(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(mmf::continuous_fuse_serial(f.bev, f.image, f.corr, f.mlp));
  state.counters["matched"] = static_cast<double>(f.corr.matched());
}
void BM_FuseOmp(benchmark::State& state) {
  const auto& f = fixture();
  set_threads(state);
  for (auto _ : state) benchmark::DoNotOptimize(mmf::continuous_fuse(f.bev, f.image, f.corr, f.mlp));
  state.counters["matched"] = static_cast<double>(f.corr.matched());
}

void BM_IouMatrixSerial(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(mmf::iou_matrix_bev_serial(f.boxes, f.boxes));
}
void BM_IouMatrixOmp(benchmark::State& state) {
  const auto& f = fixture();
  set_threads(state);
  for (auto _ : state) benchmark::DoNotOptimize(mmf::iou_matrix_bev(f.boxes, f.boxes));
}

}  // namespace

BENCHMARK(BM_VoxelizeSerial)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_VoxelizeOmp)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SparseDepthSerial)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SparseDepthOmp)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FuseSerial)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FuseOmp)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_IouMatrixSerial)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_IouMatrixOmp)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
