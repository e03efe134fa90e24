#include <doctest.h>

#include "dmpc/harness.hpp"
#include "oracles.hpp"

using namespace dmpc;

namespace {

// Two decoupled double integrators; output = both positions.
LinearAgent planar(const std::string& name, double q) {
  LinearAgent a;
  a.name = name;
  a.A = Matrix::Identity(4, 4);
  a.A(0, 1) = 1.0;
  a.A(2, 3) = 1.0;
  a.B = Matrix::Zero(4, 2);
  a.B(1, 0) = 1.0;
  a.B(3, 1) = 1.0;
  a.C = Matrix::Zero(2, 4);
  a.C(0, 0) = 1.0;
  a.C(1, 2) = 1.0;
  a.Q = q * Matrix::Identity(4, 4);
  a.R = Matrix::Identity(2, 2);
  a.X = Polyhedron::box(Vector::Constant(4, -20.0), Vector::Constant(4, 20.0));
  a.U = Polyhedron::box(Vector::Constant(2, -2.0), Vector::Constant(2, 2.0));
  return a;
}

}  // namespace

TEST_CASE("refined grid search agrees with the exhaustive grid") {
  const ScenarioConfig sc = build_reference_scenario();
  const auto pr = sc.make_problems();
  const BoxSet box{Vector{{-2.0}}, Vector{{2.0}}};
  const GridSearchResult fine = grid_search_theta(pr, sc.initial_states, box, 0.01);
  const GridSearchResult full = grid_search_theta_exhaustive(pr, sc.initial_states, box, 0.01);
  CHECK(std::abs(fine.theta_best(0) - full.theta_best(0)) <= 0.01 + 1e-12);
  CHECK(fine.value == doctest::Approx(full.value).epsilon(1e-9));
  CHECK(fine.evaluated < full.evaluated + 50);
}

TEST_CASE("grid search and centralized optimum agree on the reference scenario") {
  const ScenarioConfig sc = build_reference_scenario();
  const auto pr = sc.make_problems();
  const CentralizedSolution cs = solve_centralized(pr, sc.initial_states, sc.theta_box);
  const GridSearchResult g = grid_search_theta(pr, sc.initial_states, sc.theta_box, 1e-3);
  CHECK(std::abs(g.theta_best(0) - cs.theta_star(0)) <= 1e-3);
  CHECK(g.value >= cs.Jstar - 1e-9);
  CHECK(g.ties.empty());
  // symmetric agents, symmetric weights: the optimum is the mean position
  CHECK(cs.theta_star(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("two-dimensional grid search, serial and parallel") {
  std::vector<LocalProblem> pr;
  pr.emplace_back(planar("p0", 1.0), 5);
  pr.emplace_back(planar("p1", 2.0), 5);
  pr.emplace_back(planar("p2", 0.5), 5);
  const std::vector<Vector> x0 = {Vector{{-1.0, 0.0, 1.0, 0.0}}, Vector{{2.0, 0.0, 0.0, 0.0}},
                                  Vector{{0.5, 0.0, -2.0, 0.0}}};
  const BoxSet box{Vector{{-3.0, -3.0}}, Vector{{3.0, 3.0}}};
  const CentralizedSolution cs = solve_centralized(pr, x0, box);
  const GridSearchResult a = grid_search_theta(pr, x0, box, 0.01, true);
  const GridSearchResult b = grid_search_theta(pr, x0, box, 0.01, false);
  CHECK((a.theta_best - cs.theta_star).lpNorm<Eigen::Infinity>() <= 0.01);
  CHECK(a.theta_best == b.theta_best);
  CHECK(a.value == b.value);
  CHECK_THROWS_AS(grid_search_theta(pr, x0, box, 0.0), ConfigError);
}

TEST_CASE("Lyapunov report of a converged run") {
  const ScenarioConfig sc = build_reference_scenario();
  RunOptions o;
  o.steps = 15;
  const ClosedLoopLog log = algorithm1_run(sc, RunMode::fully_converged(1e-8), o);
  const auto pr = sc.make_problems();
  const LyapunovReport r = lyapunov_report(log, pr, sc.theta_box);
  REQUIRE(r.Jstar.size() == 16);
  CHECK(r.monotone);
  CHECK(r.decrease_ok);
  CHECK(r.increase_tol == doctest::Approx(1e-6 * (1.0 + r.Jstar[0])));
  for (std::size_t t = 0; t + 1 < r.Jstar.size(); ++t) CHECK(r.Jstar[t + 1] <= r.Jstar[t] + r.increase_tol);
  const LyapunovReport serial = lyapunov_report(log, pr, sc.theta_box, false);
  CHECK(serial.Jstar == r.Jstar);
}

TEST_CASE("built-in scenarios") {
  for (const auto& name : builtin_scenario_names()) {
    const ScenarioConfig sc = builtin_scenario(name);
    CHECK_NOTHROW(sc.validate_structure());
    CHECK(sc.name == name);
  }
  CHECK_THROWS_AS(builtin_scenario("nope"), ConfigError);

  const ScenarioConfig eq = build_refueling_equalized_scenario();
  for (int i = 1; i < eq.size(); ++i) {
    CHECK(eq.agents[i].A == eq.agents[0].A);
    CHECK(eq.agents[i].B == eq.agents[0].B);
    CHECK(eq.agents[i].Q == eq.agents[0].Q);
    CHECK(eq.agents[i].R == eq.agents[0].R);
    CHECK(eq.agents[i].U.h == eq.agents[0].U.h);
  }
}

TEST_CASE("calibration sets eps from the budget") {
  ScenarioConfig sc = build_reference_scenario();
  calibrate_parameters(sc, 21);
  const int k_pass = std::min(sc.cycle_budget - 1, 2 * sc.cycle_budget / 3);
  const double want = sc.steps * convergence_bound(k_pass, sc.size(), sc.params.beta, sc.params.mu) * (1.0 + 1e-9);
  CHECK(sc.params.eps == doctest::Approx(want).epsilon(1e-12));
  // the accuracy test passes at k_pass on the last instant
  CHECK(sg_accuracy_test(k_pass, sc.steps - 1, sc.params, sc.size()));
}
