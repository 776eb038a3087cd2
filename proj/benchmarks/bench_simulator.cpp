#include <benchmark/benchmark.h>

#include "spiked/simulator.hpp"

using namespace spiked;

static void BM_ExactPosterior(benchmark::State& state) {
  const Prior p = make_rademacher();
  const auto inst = sample_instance(p, static_cast<int>(state.range(0)), 1, 2.0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(exact_posterior(inst, p));
  state.SetItemsProcessed(state.iterations() * (1LL << state.range(0)));
}
BENCHMARK(BM_ExactPosterior)->Arg(10)->Arg(14)->Unit(benchmark::kMillisecond);

static void BM_LogPartitionFactorized(benchmark::State& state) {
  const Prior p = make_rademacher();
  const auto inst = sample_instance(p, 12, static_cast<int>(state.range(0)), 2.0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(log_partition(inst, p));
}
BENCHMARK(BM_LogPartitionFactorized)->Arg(1)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

static void BM_LogPartitionEnumerated(benchmark::State& state) {
  const Prior p = make_sparse_rademacher(0.5);
  const auto inst = sample_instance(p, 3, 4, 2.0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(log_partition(inst, p));
}
BENCHMARK(BM_LogPartitionEnumerated)->Unit(benchmark::kMillisecond);
