// Serial reference kernels against their OpenMP versions.
//   ./dmpc_bench --benchmark_filter=Points
// Thread count follows OMP_NUM_THREADS.

#include <random>

#include <benchmark/benchmark.h>

#include "dmpc/consensus.hpp"
#include "dmpc/harness.hpp"
#include "dmpc/kernels.hpp"
#include "oracles.hpp"

using namespace dmpc;

namespace {

const ScenarioConfig& reference() {
  static const ScenarioConfig sc = build_reference_scenario();
  return sc;
}

const std::vector<LocalProblem>& reference_problems() {
  static const std::vector<LocalProblem> pr = reference().make_problems();
  return pr;
}

template <bool Parallel>
void Points(benchmark::State& st) {
  const auto& sc = reference();
  const auto thetas = box_grid(sc.theta_box, static_cast<int>(st.range(0)));
  for (auto _ : st) {
    auto r = Parallel ? kernels::evaluate_points_parallel(reference_problems(), sc.initial_states, thetas)
                      : kernels::evaluate_points_serial(reference_problems(), sc.initial_states, thetas);
    benchmark::DoNotOptimize(r.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(thetas.size()));
}

template <bool Parallel>
void QpBatch(benchmark::State& st) {
  std::mt19937_64 rng(5);
  std::vector<QpProblem> qps;
  for (int i = 0; i < st.range(0); ++i) qps.push_back(oracle::random_qp(rng, i % 4 == 0));
  for (auto _ : st) {
    auto r = Parallel ? kernels::solve_batch_parallel(qps) : kernels::solve_batch_serial(qps);
    benchmark::DoNotOptimize(r.data());
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

template <bool Parallel>
void Centralized(benchmark::State& st) {
  const auto& sc = reference();
  std::vector<std::vector<Vector>> sets;
  for (int j = 0; j < st.range(0); ++j) {
    auto x = sc.initial_states;
    for (auto& v : x) v(0) += 0.01 * j;
    sets.push_back(x);
  }
  for (auto _ : st) {
    auto r = Parallel ? kernels::centralized_values_parallel(reference_problems(), sets, sc.theta_box)
                      : kernels::centralized_values_serial(reference_problems(), sets, sc.theta_box);
    benchmark::DoNotOptimize(r.data());
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

}  // namespace

BENCHMARK(Points<false>)->Name("Points/serial")->Arg(101)->Arg(1001)->Unit(benchmark::kMillisecond);
BENCHMARK(Points<true>)->Name("Points/parallel")->Arg(101)->Arg(1001)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(QpBatch<false>)->Name("QpBatch/serial")->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(QpBatch<true>)->Name("QpBatch/parallel")->Arg(256)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(Centralized<false>)->Name("Centralized/serial")->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(Centralized<true>)->Name("Centralized/parallel")->Arg(64)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
