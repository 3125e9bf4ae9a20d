#include <numeric>
#include <vector>

#include <benchmark/benchmark.h>

#include "age/encoder.hpp"
#include "age/inference.hpp"
#include "age/linalg.hpp"
#include "age/random.hpp"
#include "age/spectral.hpp"
#include "age/trainer.hpp"
#include "age/world.hpp"

namespace {

using namespace age;

void BM_Svd(benchmark::State& state) {
  Rng rng(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix m = gaussian_matrix(rng, n, n / 2);
  for (auto _ : state) benchmark::DoNotOptimize(svd(m));
}
BENCHMARK(BM_Svd)->Arg(16)->Arg(32)->Arg(64)->Arg(128);

void BM_PseudoInverse(benchmark::State& state) {
  Rng rng(2);
  const Matrix m = gaussian_matrix(rng, 32, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(pseudo_inverse(m));
}
BENCHMARK(BM_PseudoInverse)->Arg(4)->Arg(16)->Arg(100);

Mlp bench_net(std::size_t d, std::size_t hidden, std::size_t l) {
  const auto params = init_params(LayerGrouping::per_layer(1), EncoderDims{d, hidden, l, 0.2}, 3);
  return params.nets.front();
}

void BM_MlpForward(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  const Mlp net = bench_net(32, h, 16);
  Rng rng(4);
  const Vector x = gaussian_matrix(rng, 32, 1);
  for (auto _ : state) benchmark::DoNotOptimize(mlp_forward(net, x, 0.2));
}
BENCHMARK(BM_MlpForward)->Arg(64)->Arg(256);

void BM_MlpBackwardBatch(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  const Mlp net = bench_net(32, h, 16);
  Rng rng(5);
  const Matrix x = gaussian_matrix(rng, 32, 16);
  const Matrix g = gaussian_matrix(rng, 16, 16);
  for (auto _ : state) {
    auto [out, cache] = mlp_forward_batch(net, x, 0.2);
    benchmark::DoNotOptimize(mlp_backward_batch(net, cache, g, 0.2));
  }
}
BENCHMARK(BM_MlpBackwardBatch)->Arg(64)->Arg(256);

void BM_TrainStep(benchmark::State& state) {
  SyntheticWorldSpec spec;
  spec.seed = 101;
  const auto world = generate_world(spec);
  const auto ds = sample_dataset(world, 50, Split::kSeen, 1);
  TrainConfig config;
  config.dictionary_size = 16;
  config.threads = static_cast<std::size_t>(state.range(0));
  const auto data = prepare_training_data(ds, world, config);
  const auto train_state = init_train_state(world.layers(), world.dim(), config);
  std::vector<std::size_t> batch(config.batch_size);
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_objective(train_state, data, batch, world, config, true));
  }
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(3)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
