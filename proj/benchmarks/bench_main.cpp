#include <benchmark/benchmark.h>

#include <random>

#include "fetalpose/heatmap.hpp"
#include "fetalpose/hourglass.hpp"
#include "fetalpose/layers.hpp"
#include "fetalpose/mrf.hpp"
#include "fetalpose/phantom.hpp"
#include "fetalpose/pipeline.hpp"

using namespace fetalpose;

namespace {

Tensor<float> random_tensor(std::vector<int> shape, std::mt19937_64& rng, float scale = 1.0f) {
  Tensor<float> t(std::move(shape));
  std::uniform_real_distribution<float> u(-scale, scale);
  for (float& v : t.values()) v = u(rng);
  return t;
}

struct Fixture {
  PhantomConfig cfg;
  HeatmapStack heatmaps;
  BoneStats stats;

  Fixture() {
    std::mt19937_64 rng(1);
    const auto truth = GeneratorTruth::fetal_default();
    heatmaps = render_heatmaps(sample_pose(cfg, truth, fetal_skeleton(), rng), cfg.dims);
    std::vector<LabeledPose> poses;
    for (int i = 0; i < 60; ++i) {
      PhantomConfig c = cfg;
      c.ga_weeks = 25.0 + (i % 11);
      poses.push_back({sample_pose(c, truth, fetal_skeleton(), rng), c.ga_weeks, cfg.spacing_mm});
    }
    stats = estimate_bone_stats(poses);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_Conv3dForward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(2);
  const auto x = random_tensor({16, n, n, n}, rng);
  const auto w = random_tensor({16, 16, 3, 3, 3}, rng, 0.1f);
  const Tensor<float> b({16});
  for (auto _ : state) benchmark::DoNotOptimize(conv3d_forward(x, w, b));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n) * n * n);
}
BENCHMARK(BM_Conv3dForward)->Arg(16)->Arg(32)->Arg(48)->Unit(benchmark::kMillisecond);

void BM_Conv3dBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(3);
  const auto x = random_tensor({16, n, n, n}, rng);
  const auto w = random_tensor({16, 16, 3, 3, 3}, rng, 0.1f);
  const auto go = random_tensor({16, n, n, n}, rng);
  Tensor<float> gx(x.shape()), gw(w.shape()), gb({16});
  for (auto _ : state) {
    conv3d_backward(x, w, go, &gx, gw, gb);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_Conv3dBackward)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_LocalMaxima(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(top_l_local_maxima(f.heatmaps.channel(0), f.cfg.dims, 3));
}
BENCHMARK(BM_LocalMaxima)->Unit(benchmark::kMillisecond);

void BM_BeliefPropagation(benchmark::State& state) {
  const auto& f = fixture();
  const CandidateSet c = extract_candidates(f.heatmaps);
  for (auto _ : state) benchmark::DoNotOptimize(map_inference_bp(c, fetal_skeleton(), f.stats, 30.0));
}
BENCHMARK(BM_BeliefPropagation)->Unit(benchmark::kMicrosecond);

void BM_Stage2(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(refine_pose(f.heatmaps, f.stats, 30.0));
}
BENCHMARK(BM_Stage2)->Unit(benchmark::kMillisecond);

void BM_HourglassForward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(4);
  const auto model = Hourglass<float>::build(HourglassConfig{}, rng, false);
  const auto x = random_tensor({1, n, n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(model.infer(x));
}
BENCHMARK(BM_HourglassForward)->Arg(32)->Arg(48)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
