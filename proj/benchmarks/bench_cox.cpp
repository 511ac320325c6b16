#include "coxsgd/batching.hpp"
#include "coxsgd/cox_linear.hpp"
#include "coxsgd/cox_mlp.hpp"
#include "coxsgd/simulate.hpp"

#include <benchmark/benchmark.h>

using namespace coxsgd;

namespace {

Dataset make_data(Index n, Index p) {
  Rng rng(3, 0);
  return simulate_dataset(resolve_censoring(regression_protocol(p), 3), n, rng);
}

void BM_RiskSetWeights(benchmark::State& state) {
  const Index n = state.range(0);
  const Dataset d = make_data(n, 10);
  std::vector<double> f(static_cast<std::size_t>(n), 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(risk_set_weights(d, f, true));
  state.SetComplexityN(n);
}
BENCHMARK(BM_RiskSetWeights)->RangeMultiplier(4)->Range(64, 65536)->Complexity();

void BM_BatchGradient(benchmark::State& state) {
  const Index s = state.range(0);
  const Dataset d = make_data(2048, 10);
  const Eigen::VectorXd theta = Eigen::VectorXd::Constant(10, 0.1);
  Rng rng(5, 0);
  for (auto _ : state) {
    const MiniBatch b = sample_subset(2048, s, rng);
    benchmark::DoNotOptimize(batch_gradient(d, b, theta));
  }
}
BENCHMARK(BM_BatchGradient)->RangeMultiplier(2)->Range(4, 512);

void BM_BatchHessian(benchmark::State& state) {
  const Index s = state.range(0);
  const Dataset d = make_data(2048, 10);
  const Eigen::VectorXd theta = Eigen::VectorXd::Constant(10, 0.1);
  Rng rng(5, 0);
  for (auto _ : state) {
    const MiniBatch b = sample_subset(2048, s, rng);
    benchmark::DoNotOptimize(batch_hessian(d, b, theta));
  }
}
BENCHMARK(BM_BatchHessian)->RangeMultiplier(4)->Range(4, 512);

void BM_MlpBackprop(benchmark::State& state) {
  const Index s = state.range(0);
  const Dataset d = make_data(2048, 10);
  Rng rng(7, 0);
  const MlpCoxModel model = MlpCoxModel::initialized({10, 32, 32, 1}, rng);
  for (auto _ : state) {
    const MiniBatch b = sample_subset(2048, s, rng);
    benchmark::DoNotOptimize(batch_loss_grad(d, b, model));
  }
}
BENCHMARK(BM_MlpBackprop)->RangeMultiplier(4)->Range(32, 512);

}  // namespace
BENCHMARK_MAIN();
