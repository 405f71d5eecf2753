#include <benchmark/benchmark.h>

#include "dyronet/dataset/synth.hpp"
#include "dyronet/lora/lora.hpp"
#include "dyronet/numcore/ops.hpp"
#include "dyronet/router/router.hpp"
#include "dyronet/streameval/streameval.hpp"
#include "dyronet/branchnet/detector.hpp"

using namespace dyronet;
using num::NdArray;

namespace {

NdArray filled(num::Shape shape, std::uint64_t seed) {
  num::Rng rng(seed);
  NdArray a(std::move(shape));
  for (double& v : a.data()) v = rng.uniform(-1.0, 1.0);
  return a;
}

data::Clip moving_clip() {
  data::SyntheticClipSpec spec;
  spec.motion = data::MotionState::kTurning;
  spec.length = 16;
  return data::gen_clip(spec, 3);
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const NdArray k = filled({c, c, 3, 3}, 1), x = filled({c, 48, 80}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(num::conv2d_forward(k, x, {1, 1}));
}
BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(16)->Arg(32);

void BM_DetectorForward(benchmark::State& state) {
  const char* names[] = {"S", "M", "L"};
  branch::ToyDetector det(branch::scale_preset(names[state.range(0)]), {}, 1);
  const auto clip = moving_clip();
  const auto window = branch::make_window(clip.frames, 8, det.scale());
  for (auto _ : state) benchmark::DoNotOptimize(det.forward(window));
  state.SetLabel(names[state.range(0)]);
}
BENCHMARK(BM_DetectorForward)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

void BM_DetectorForwardWithAdapters(benchmark::State& state) {
  branch::ToyDetector det(branch::scale_preset("S"), {}, 1);
  det.attach_adapters(2);
  const auto clip = moving_clip();
  const auto window = branch::make_window(clip.frames, 8, det.scale());
  for (auto _ : state) benchmark::DoNotOptimize(det.forward(window));
}
BENCHMARK(BM_DetectorForwardWithAdapters)->Unit(benchmark::kMillisecond);

void BM_RouterRoute(benchmark::State& state) {
  router::RouterNet r(2, 1);
  const auto clip = moving_clip();
  for (auto _ : state) benchmark::DoNotOptimize(router::route(router::frame_diff(clip.frames[5], clip.frames[4]), r));
}
BENCHMARK(BM_RouterRoute)->Unit(benchmark::kMicrosecond);

void BM_SapOracleStream(benchmark::State& state) {
  const auto clip = moving_clip();
  std::vector<eval::PredictionRecord> recs;
  for (std::size_t f = 0; f < clip.length(); ++f) {
    eval::PredictionRecord r;
    r.source_frame = f;
    r.available_at_ms = static_cast<double>(f) * 1000.0 / 30.0;
    for (const auto& a : clip.annotations[f]) r.detections.push_back({a.box, a.class_id, 1.0});
    recs.push_back(std::move(r));
  }
  for (auto _ : state) benchmark::DoNotOptimize(eval::sap(recs, clip));
}
BENCHMARK(BM_SapOracleStream)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
