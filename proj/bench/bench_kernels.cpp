// Serial reference vs OpenMP paths: matmul kernels, batch gradients and
// occlusion labelling.

#include <benchmark/benchmark.h>

#include "attnpool/datasets.hpp"
#include "attnpool/kernels.hpp"
#include "attnpool/parallel.hpp"
#include "attnpool/rng.hpp"
#include "attnpool/training.hpp"

using namespace attnpool;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (double& x : m.values()) x = rng.uniform(-1.0, 1.0);
  return m;
}

void BM_MatmulSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  Matrix out(n, n);
  for (auto _ : state) {
    kernels::serial::matmul_nn(a, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

void BM_MatmulParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  Matrix out(n, n);
  for (auto _ : state) {
    kernels::parallel::matmul_nn(a, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

const Dataset& colors_data() {
  static const Dataset ds = [] {
    ColorsConfig c;
    c.n_train = 64;
    c.n_val = 1;
    c.n_test = 1;
    c.seed = 3;
    return gen_colors(c);
  }();
  return ds;
}

ModelConfig bench_model(PoolMode mode) {
  ModelConfig m;
  m.in_dim = 4;
  m.pool.mode = mode;
  if (mode != PoolMode::None) {
    m.pool.layers_after = {0};
    m.pool.alpha_tilde = 0.05;
  }
  return m;
}

void BM_TrainEpoch(benchmark::State& state) {
  TrainConfig tc;
  tc.epochs = 1;
  tc.decay_epochs = {};
  tc.supervision = Supervision::Gt;
  tc.eval_every = 0;
  tc.parallel = state.range(0) != 0;
  for (auto _ : state) {
    auto r = train(bench_model(PoolMode::Threshold), colors_data().at(SplitName::Train), nullptr, tc);
    benchmark::DoNotOptimize(r.history.back().train_loss);
  }
}

void BM_Occlusion(benchmark::State& state) {
  const Model model(bench_model(PoolMode::None), 5);
  const bool parallel = state.range(0) != 0;
  for (auto _ : state) {
    auto labels = occlusion_labels(model, colors_data().at(SplitName::Train), parallel);
    benchmark::DoNotOptimize(labels.alpha.data());
  }
}

}  // namespace

BENCHMARK(BM_MatmulSerial)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_MatmulParallel)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_TrainEpoch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Occlusion)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
