#include <benchmark/benchmark.h>

#include "msica/likelihood.hpp"
#include "msica/rng.hpp"
#include "msica/solver.hpp"
#include "msica/supervision.hpp"
#include "msica/synthgen.hpp"
#include "msica/unmixing.hpp"

using namespace msica;

namespace {

MatrixXd gaussian(Index r, Index c, std::uint64_t seed) {
  Xoshiro256pp rng(seed);
  MatrixXd m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

GeneratedData multi_trial(Index n, Index c, Index t) {
  RecipeOverrides o;
  o.n_trials = n;
  o.channels = c;
  o.samples = t;
  return gen_dataset(Recipe::multi_trial, o, 1);
}

}  // namespace

static void BM_RowUpdate(benchmark::State& state) {
  const Index C = state.range(0);
  const UnmixingState w(MatrixXd::Identity(C, C) + 0.1 * gaussian(C, C, 1));
  const MatrixXd g = gaussian(C, 2 * C, 2);
  const MatrixXd A = g * g.transpose() / static_cast<double>(2 * C);
  const MatrixXd B = gaussian(C, C, 3);
  for (auto _ : state) benchmark::DoNotOptimize(row_update(w, A, B, 0, 1.0, 0.01));
}
BENCHMARK(BM_RowUpdate)->Arg(4)->Arg(10)->Arg(32);

static void BM_ComputeAc(benchmark::State& state) {
  const auto g = multi_trial(20, state.range(0), 500);
  const Density d = Density::laplace();
  const UnmixingState w(MatrixXd::Identity(state.range(0), state.range(0)));
  const AuxTensor u = aux_exact(w, g.dataset, d);
  const auto trials = all_indices(g.dataset.n_trials());
  const auto times = all_indices(g.dataset.samples());
  for (auto _ : state) benchmark::DoNotOptimize(compute_A_c(u, g.dataset, 0, trials, times));
}
BENCHMARK(BM_ComputeAc)->Arg(5)->Arg(10);

static void BM_FeatureMap(benchmark::State& state) {
  FeatureMapConfig cfg;
  cfg.window = state.range(0);
  cfg.hop = state.range(0) / 2;
  const FeatureMap fm(cfg, 1000);
  const VectorXd s = gaussian(1000, 1, 4).col(0);
  for (auto _ : state) benchmark::DoNotOptimize(fm(s));
}
BENCHMARK(BM_FeatureMap)->Arg(32)->Arg(64)->Arg(128);

static void BM_StochasticIteration(benchmark::State& state) {
  const auto g = multi_trial(80, 10, 1000);
  SolverConfig c;
  c.iterations = 100;
  c.batch_trials = 10;
  c.batch_times = 64;
  c.eta_u = 0.1;
  c.trace_every = 100;
  for (auto _ : state) benchmark::DoNotOptimize(fit_stochastic(g.dataset, c));
  state.SetItemsProcessed(state.iterations() * c.iterations);
}
BENCHMARK(BM_StochasticIteration)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
