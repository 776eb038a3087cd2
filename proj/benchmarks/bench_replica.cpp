#include <benchmark/benchmark.h>

#include "spiked/channel.hpp"
#include "spiked/replica.hpp"

using namespace spiked;

static void BM_MiScalar(benchmark::State& state) {
  const Prior p = make_sparse_rademacher(0.3);
  const GaussQuadrature q = gauss_hermite(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(mi_scalar_signal(p, 2.0, q));
}
BENCHMARK(BM_MiScalar)->Arg(64)->Arg(256);

static void BM_F1Sup(benchmark::State& state) {
  const Prior p = make_rademacher();
  const GaussQuadrature q = gauss_hermite(kDefaultScalarOrder);
  for (auto _ : state) benchmark::DoNotOptimize(f1_sup(p, 2.0, q));
}
BENCHMARK(BM_F1Sup)->Unit(benchmark::kMillisecond);

static void BM_FmPotential(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const ReplicaSystem sys(make_sparse_rademacher(0.3), dim, 2.0, gauss_hermite(kDefaultTensorOrder));
  const Eigen::MatrixXd q = 0.2 * Eigen::MatrixXd::Identity(dim, dim);
  for (auto _ : state) benchmark::DoNotOptimize(sys.potential(q));
}
BENCHMARK(BM_FmPotential)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

static void BM_FmSup(benchmark::State& state) {
  const Prior p = make_rademacher();
  for (auto _ : state) benchmark::DoNotOptimize(fm_sup(p, 2, 2.0));
}
BENCHMARK(BM_FmSup)->Unit(benchmark::kMillisecond)->Iterations(1);

static void BM_VectorMi(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const Prior p = make_sparse_rademacher(0.3);
  const auto sigma = NoiseCovariance::from_matrix(Eigen::MatrixXd::Identity(dim, dim) * 1.5);
  const GaussQuadrature axis = gauss_hermite(kDefaultTensorOrder);
  for (auto _ : state) benchmark::DoNotOptimize(mi_vector(p, dim, sigma, axis));
}
BENCHMARK(BM_VectorMi)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
