#include <doctest.h>

#include <omp.h>

#include <cmath>

#include "dmpc/consensus.hpp"
#include "dmpc/harness.hpp"
#include "dmpc/kernels.hpp"
#include "oracles.hpp"

using namespace dmpc;

namespace {

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

// Runs `f` with a forced thread count so the parallel path really splits
// work even on a single-core machine.
template <class F>
auto with_threads(int n, F f) {
  const int old = omp_get_max_threads();
  omp_set_num_threads(n);
  auto r = f();
  omp_set_num_threads(old);
  return r;
}

}  // namespace

TEST_CASE("point evaluation: serial and parallel are identical") {
  const ScenarioConfig sc = build_reference_scenario();
  const auto pr = sc.make_problems();
  auto thetas = box_grid(sc.theta_box, 57);
  // points no agent can reach in T steps from its state
  const BoxSet wide{Vector{{-60.0}}, Vector{{60.0}}};
  thetas.push_back(wide.hi);
  const auto s = kernels::evaluate_points_serial(pr, sc.initial_states, thetas);
  for (int n : {1, 3, 4}) {
    const auto p = with_threads(n, [&] { return kernels::evaluate_points_parallel(pr, sc.initial_states, thetas); });
    REQUIRE(p.size() == s.size());
    for (std::size_t j = 0; j < s.size(); ++j) {
      CHECK(p[j].feasible == s[j].feasible);
      CHECK(same(p[j].total_cost, s[j].total_cost));
      CHECK(same(p[j].max_g_norm, s[j].max_g_norm));
    }
  }
  CHECK_FALSE(s.back().feasible);
  CHECK(std::isnan(s.back().total_cost));
  // matches the direct sum
  CHECK(s[10].total_cost == total_cost(pr, sc.initial_states, thetas[10]));
}

TEST_CASE("QP batch: serial and parallel are identical") {
  std::mt19937_64 rng(99);
  std::vector<QpProblem> qps;
  for (int i = 0; i < 64; ++i) qps.push_back(oracle::random_qp(rng, i % 4 == 0));
  const auto s = kernels::solve_batch_serial(qps);
  const auto p = with_threads(4, [&] { return kernels::solve_batch_parallel(qps); });
  for (std::size_t i = 0; i < qps.size(); ++i) {
    CHECK(s[i].status == p[i].status);
    CHECK(s[i].z == p[i].z);
    CHECK(s[i].value == p[i].value);
  }
}

TEST_CASE("centralized values: serial and parallel are identical") {
  const ScenarioConfig sc = build_reference_scenario();
  const auto pr = sc.make_problems();
  std::vector<std::vector<Vector>> sets;
  for (int j = 0; j < 12; ++j) {
    auto x = sc.initial_states;
    for (auto& v : x) v(0) += 0.25 * j;
    sets.push_back(x);
  }
  const auto s = kernels::centralized_values_serial(pr, sets, sc.theta_box);
  const auto p = with_threads(3, [&] { return kernels::centralized_values_parallel(pr, sets, sc.theta_box); });
  CHECK(s == p);
  CHECK(s[0] == doctest::Approx(solve_centralized(pr, sc.initial_states, sc.theta_box).Jstar));
  CHECK(kernels::max_threads() >= 1);
}
