#include <benchmark/benchmark.h>

#include "coordflow/apps.hpp"
#include "coordflow/codec.hpp"
#include "coordflow/loss.hpp"
#include "coordflow/model.hpp"
#include "coordflow/optim.hpp"
#include "coordflow/rng.hpp"
#include "coordflow/tensor.hpp"

using namespace coordflow;

namespace {

Tensor random_matrix(int64_t r, int64_t c, Rng& rng, bool grad) {
  std::vector<float> v(size_t(r * c));
  for (float& x : v) x = rng.uniform(-1.0f, 1.0f);
  return Tensor::from_data({r, c}, std::move(v), grad);
}

void BM_MatmulForward(benchmark::State& state) {
  const int64_t n = state.range(0), w = state.range(1);
  Rng rng(1);
  Tensor a = random_matrix(n, w, rng, false);
  Tensor b = random_matrix(w, w, rng, false);
  NoGradScope ng;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b).data().data());
  state.SetItemsProcessed(state.iterations() * 2 * n * w * w);
}
BENCHMARK(BM_MatmulForward)->Args({16384, 56})->Args({16384, 128})->Args({4096, 608});

void BM_TrainStep(benchmark::State& state) {
  const int64_t batch = state.range(0);
  CoordFlowModel model = make_preset("tiny", 2, 3);
  AdamW opt(model.trainable_params());
  Rng rng(2);
  std::vector<float> xs(batch), ys(batch), ts(batch), gt(batch * 3), w(batch, 1.0f);
  for (int64_t i = 0; i < batch; ++i) {
    xs[i] = rng.uniform(-1, 1);
    ys[i] = rng.uniform(-1, 1);
    ts[i] = rng.uniform(-1, 1);
  }
  for (float& v : gt) v = rng.next_float();
  Tensor x = Tensor::from_data({batch, 1}, xs);
  Tensor y = Tensor::from_data({batch, 1}, ys);
  Tensor t = Tensor::from_data({batch, 1}, ts);
  Tensor g = Tensor::from_data({batch, 3}, gt);
  Tensor ww = Tensor::from_data({batch, 1}, w);
  for (auto _ : state) {
    LossReport rep = total_loss(composite_forward(model, x, y, t), g, ww);
    backward(rep.total);
    opt.step(1e-4f);
    opt.zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_TrainStep)->Arg(4096)->Arg(16384)->Unit(benchmark::kMillisecond);

void BM_RenderFrame(benchmark::State& state) {
  CoordFlowModel model = make_preset("tiny", 2, 4);
  model.width = 96;
  model.height = 96;
  model.frames = 1;
  const std::vector<float> times = {0.0f};
  for (auto _ : state) benchmark::DoNotOptimize(render(model, times, 96, 96));
  state.SetItemsProcessed(state.iterations() * 96 * 96);
}
BENCHMARK(BM_RenderFrame)->Unit(benchmark::kMillisecond);

void BM_RangeCoder(benchmark::State& state) {
  Rng rng(5);
  std::vector<uint8_t> raw(size_t(state.range(0)));
  for (auto& b : raw) b = uint8_t(rng.normal(128.0f, 24.0f));
  for (auto _ : state) {
    auto coded = entropy_encode(raw);
    benchmark::DoNotOptimize(entropy_decode(coded));
  }
  state.SetBytesProcessed(state.iterations() * int64_t(raw.size()));
}
BENCHMARK(BM_RangeCoder)->Arg(1 << 16)->Arg(1 << 20);

void BM_Quantize(benchmark::State& state) {
  Rng rng(6);
  Tensor t = random_matrix(608, 608, rng, false);
  for (auto _ : state) benchmark::DoNotOptimize(quantize(t).values.data());
  state.SetItemsProcessed(state.iterations() * t.numel());
}
BENCHMARK(BM_Quantize);

}  // namespace

BENCHMARK_MAIN();
