#include <benchmark/benchmark.h>

#include "sgt/ops.hpp"
#include "sgt/sim.hpp"
#include "sgt/sparse_ops.hpp"
#include "sgt/trainer.hpp"

namespace {

sgt::Tensor3D random_tensor(int c, int h, int w, double zero_fraction, std::uint64_t seed) {
  sgt::Rng rng(seed);
  sgt::Tensor3D t(c, h, w);
  for (float& f : t.v)
    f = rng.uniform() < zero_fraction ? 0.0f : static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

sgt::FilterBank random_filters(int m, int c, int r, int s, std::uint64_t seed) {
  sgt::Rng rng(seed);
  sgt::FilterBank w(m, c, r, s);
  for (float& f : w.v) f = static_cast<float>(rng.uniform(-1.0, 1.0));
  return w;
}

const sgt::LayerSpec kSpec =
    sgt::LayerSpec::make(32, 16, 16, 32, 3, 3, 1, 1, sgt::PostOp::ReLU);

void BM_DenseForward(benchmark::State& state) {
  const auto x = random_tensor(32, 16, 16, 0.0, 1);
  const auto w = random_filters(32, 32, 3, 3, 2);
  for (auto _ : state) benchmark::DoNotOptimize(sgt::conv2d_forward(x, w, kSpec));
}
BENCHMARK(BM_DenseForward);

void BM_SparseForward(benchmark::State& state) {
  const double zf = static_cast<double>(state.range(0)) / 100.0;
  const auto x = random_tensor(32, 16, 16, zf, 1);
  const auto w = random_filters(32, 32, 3, 3, 2);
  const auto off = sgt::encode_tc_offsets(x);
  for (auto _ : state) benchmark::DoNotOptimize(sgt::sparse_conv_forward(x, off, w, kSpec));
}
BENCHMARK(BM_SparseForward)->Arg(0)->Arg(50)->Arg(90);

void BM_DenseBackwardData(benchmark::State& state) {
  const auto dy = random_tensor(32, 16, 16, 0.0, 3);
  const auto w = random_filters(32, 32, 3, 3, 2);
  for (auto _ : state) benchmark::DoNotOptimize(sgt::conv2d_backward_data(dy, w, kSpec));
}
BENCHMARK(BM_DenseBackwardData);

void BM_SparseBackwardData(benchmark::State& state) {
  const double zf = static_cast<double>(state.range(0)) / 100.0;
  const auto dy = random_tensor(32, 16, 16, zf, 3);
  const auto w = random_filters(32, 32, 3, 3, 2);
  const auto off = sgt::encode_tc_offsets(dy);
  sgt::OutputBitmap bm(32, 16, 16);
  sgt::Rng rng(4);
  for (int c = 0; c < 32; ++c)
    for (int h = 0; h < 16; ++h)
      for (int v = 0; v < 16; ++v) bm.set(c, h, v, rng.uniform() >= zf);
  for (auto _ : state)
    benchmark::DoNotOptimize(sgt::sparse_conv_backward_data(dy, off, w, bm, kSpec));
}
BENCHMARK(BM_SparseBackwardData)->Arg(0)->Arg(50)->Arg(90);

void BM_SimulateLayerBp(benchmark::State& state) {
  const double zf = static_cast<double>(state.range(0)) / 100.0;
  const auto dy = random_tensor(32, 16, 16, zf, 3);
  const auto w = random_filters(32, 32, 3, 3, 2);
  const auto off = sgt::encode_tc_offsets(dy);
  sgt::OutputBitmap bm(32, 16, 16);
  sgt::Rng rng(4);
  for (int c = 0; c < 32; ++c)
    for (int h = 0; h < 16; ++h)
      for (int v = 0; v < 16; ++v) bm.set(c, h, v, rng.uniform() >= zf);
  sgt::NodeConfig cfg;
  sgt::LayerOperands ops;
  ops.input = &dy;
  ops.input_offsets = &off;
  ops.weights = &w;
  ops.out_bitmap = &bm;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        sgt::simulate_layer(kSpec, ops, cfg, sgt::Scenario::IN_OUT, sgt::Pass::BP));
}
BENCHMARK(BM_SimulateLayerBp)->Arg(0)->Arg(50)->Arg(90);

}  // namespace

BENCHMARK_MAIN();
