#include <benchmark/benchmark.h>

#include <vector>

#include "brafl/baselines.hpp"
#include "brafl/bra.hpp"
#include "brafl/model.hpp"
#include "brafl/rng.hpp"

using namespace brafl;

namespace {

// 80% tight honest cluster, 20% sign-flipped copies scaled by 4.
std::vector<ClientUpdate> round_of(std::size_t k, std::size_t d) {
  Rng rng(k, d);
  std::vector<double> centre(d);
  for (auto& c : centre) c = rng.normal();
  std::vector<std::vector<double>> pts(k, std::vector<double>(d));
  for (std::size_t i = 0; i < k; ++i) {
    const bool bad = i < k / 5;
    for (std::size_t j = 0; j < d; ++j) {
      const double honest = centre[j] + rng.normal(0.0, 0.01);
      pts[i][j] = bad ? -4.0 * honest : honest;
    }
  }
  return make_updates(pts);
}

void BM_Bra(benchmark::State& state) {
  const auto updates = round_of(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  std::size_t iterations = 0;
  for (auto _ : state) {
    const auto r = aggregate_bra(updates);
    iterations = r.iterations;
    benchmark::DoNotOptimize(r.mean);
  }
  state.counters["em_iterations"] = static_cast<double>(iterations);
}

void BM_FedAvg(benchmark::State& state) {
  const auto updates = round_of(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(aggregate_fedavg(updates));
}

void BM_Median(benchmark::State& state) {
  const auto updates = round_of(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(aggregate_median(updates));
}

void BM_TrimmedMean(benchmark::State& state) {
  const auto updates = round_of(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(aggregate_trimmed_mean(updates, 0.2));
}

void BM_GeometricMedian(benchmark::State& state) {
  const auto updates = round_of(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(aggregate_geometric_median(updates));
}

void BM_MultiKrum(benchmark::State& state) {
  const std::size_t k = static_cast<std::size_t>(state.range(0));
  const auto updates = round_of(k, static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(aggregate_multi_krum(updates, k - k / 5));
}

void BM_LocalTrain(benchmark::State& state) {
  Rng rng(1, 1);
  const auto data = make_synthetic_dataset(10, 12, static_cast<std::size_t>(state.range(0)), 0.5, rng);
  const auto global = ParamVector::zeros(LogisticModel::param_count(10, 12));
  TrainingHyperparams hp;
  hp.local_epochs = 1;
  for (auto _ : state) {
    Rng r(1, 2);
    benchmark::DoNotOptimize(local_train(global, data, hp, r));
  }
}

void ScaleKD(benchmark::internal::Benchmark* b) {
  for (long k : {10, 20, 40, 80}) b->Args({k, 1000});
  for (long d : {100, 10000, 100000}) b->Args({20, d});
}

}  // namespace

BENCHMARK(BM_Bra)->Apply(ScaleKD)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_FedAvg)->Apply(ScaleKD)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Median)->Apply(ScaleKD)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_TrimmedMean)->Apply(ScaleKD)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_GeometricMedian)->Apply(ScaleKD)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_MultiKrum)->Apply(ScaleKD)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_LocalTrain)->Arg(20)->Arg(200)->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();
