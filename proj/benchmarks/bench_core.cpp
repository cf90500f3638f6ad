#include <benchmark/benchmark.h>

#include "tmr/data.hpp"
#include "tmr/model.hpp"
#include "tmr/rng.hpp"
#include "tmr/trainer.hpp"

namespace {

using namespace tmr;

template <class T>
Tensor<T> random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  Tensor<T> t(r, c);
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-1, 1));
  return t;
}

template <class T>
void BM_Matmul(benchmark::State& state) {
  std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor<T> a = random_tensor<T>(n, n, rng);
  Tensor<T> b = random_tensor<T>(n, n, rng);
  Tensor<T> c(n, n);
  for (auto _ : state) {
    std::fill(c.data.begin(), c.data.end(), T(0));
    matmul_nn_acc(a.data.data(), b.data.data(), c.data.data(), n, n, n);
    benchmark::DoNotOptimize(c.data.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK_TEMPLATE(BM_Matmul, float)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK_TEMPLATE(BM_Matmul, double)->Arg(64)->Arg(128);

void BM_FusionForward(benchmark::State& state) {
  EncoderConfig enc;
  PipelineFlags flags;
  ParamSet<float> params = init_params<float>(enc, flags, 1);
  Rng rng(2);
  Tensor<float> pts = random_tensor<float>(enc.n_points, enc.point_dim, rng);
  Tensor<float> views = random_tensor<float>(enc.n_views, enc.view_dim, rng);
  for (auto _ : state) {
    Tape<float> tape;
    auto fwd = forward_shape(tape, pts, views, std::nullopt, params, enc, flags);
    benchmark::DoNotOptimize(tape.value(fwd.shape_emb).data.data());
  }
}
BENCHMARK(BM_FusionForward);

void BM_TrainStep(benchmark::State& state) {
  DataConfig dc;
  dc.train_shapes = 64;
  dc.test_shapes = 4;
  GeneratedData data = generate_records(dc);
  EncoderConfig enc;
  PipelineFlags flags;
  TrainConfig cfg;
  ParamSet<float> params = init_params<float>(enc, flags, 1);
  AdamState<float> adam = AdamState<float>::init(params);
  auto plans = make_batches(data.train.size(), 5, 64, 7);
  for (auto _ : state) {
    Tape<float> tape;
    params.zero_grads();
    auto fwd = forward_batch(tape, data.train, plans[0], params, enc, flags);
    tape.backward(fwd.total);
    adamw_step(params, adam, 1e-3, cfg);
    benchmark::DoNotOptimize(params.get("tau").data[0]);
  }
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
