#include <benchmark/benchmark.h>

#include "cdnd/geometry.hpp"

namespace {

cdnd::PointCloud make_cloud(std::size_t n) {
  cdnd::Rng rng(1);
  cdnd::PointCloud c;
  for (std::size_t i = 0; i < n; ++i)
    c.points.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
  return c;
}

void BM_FarthestPointSample(benchmark::State& state) {
  const cdnd::PointCloud cloud = make_cloud(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    cdnd::Rng rng(0);
    auto idx = cdnd::farthest_point_sample(cloud, 8, cdnd::FpsStart::kIndexZero, rng);
    benchmark::DoNotOptimize(idx);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_FarthestPointSample)->RangeMultiplier(2)->Range(64, 1024)->Complexity();

void BM_PcaCurvature(benchmark::State& state) {
  const cdnd::PointCloud cloud = make_cloud(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto field = cdnd::pca_curvature(cloud, 20);
    benchmark::DoNotOptimize(field);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_PcaCurvature)->RangeMultiplier(2)->Range(64, 512)->Complexity();

void BM_DeformCloud(benchmark::State& state) {
  const cdnd::PointCloud cloud = make_cloud(static_cast<std::size_t>(state.range(0)));
  cdnd::DeformConfig config;
  config.curvature_neighborhood = 20;
  for (auto _ : state) {
    cdnd::Rng rng(0);
    auto deformed = cdnd::deform_cloud(cloud, config, rng);
    benchmark::DoNotOptimize(deformed);
  }
}
BENCHMARK(BM_DeformCloud)->Arg(128)->Arg(256);

}  // namespace
