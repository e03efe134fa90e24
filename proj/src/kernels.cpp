#include "dmpc/kernels.hpp"

#include <cstdint>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dmpc::kernels {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

PointEval evaluate_one(std::span<const LocalProblem> agents, std::span<const Vector> states, const Vector& theta,
                       const QpOptions& opts) {
  PointEval e;
  try {
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const LocalMpcSolution s = agents[i].solve(states[i], theta, opts);
      e.total_cost += s.qvalue;
      e.max_g_norm = std::max(e.max_g_norm, s.g.norm());
    }
    e.feasible = true;
  } catch (const LocalInfeasibleError&) {
    e = PointEval{false, kNaN, kNaN};
  }
  return e;
}

double centralized_one(std::span<const LocalProblem> agents, const std::vector<Vector>& states, const BoxSet& box,
                       const QpOptions& opts) {
  try {
    return solve_centralized(agents, states, box, opts).Jstar;
  } catch (const CentralizedInfeasibleError&) {
    return kNaN;
  }
}

void check_states(std::span<const LocalProblem> agents, std::span<const Vector> states) {
  if (agents.size() != states.size()) throw ConfigError("kernels: one state per agent required");
}

}  // namespace

std::vector<PointEval> evaluate_points_serial(std::span<const LocalProblem> agents, std::span<const Vector> states,
                                              std::span<const Vector> thetas, const QpOptions& opts) {
  check_states(agents, states);
  std::vector<PointEval> out(thetas.size());
  for (std::size_t j = 0; j < thetas.size(); ++j) out[j] = evaluate_one(agents, states, thetas[j], opts);
  return out;
}

std::vector<PointEval> evaluate_points_parallel(std::span<const LocalProblem> agents,
                                                std::span<const Vector> states, std::span<const Vector> thetas,
                                                const QpOptions& opts) {
  check_states(agents, states);
  std::vector<PointEval> out(thetas.size());
  const auto count = static_cast<std::int64_t>(thetas.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t j = 0; j < count; ++j) {
    const auto idx = static_cast<std::size_t>(j);
    out[idx] = evaluate_one(agents, states, thetas[idx], opts);
  }
  return out;
}

std::vector<QpSolution> solve_batch_serial(std::span<const QpProblem> problems, const QpOptions& opts) {
  std::vector<QpSolution> out(problems.size());
  for (std::size_t j = 0; j < problems.size(); ++j) out[j] = solve_qp(problems[j], opts);
  return out;
}

std::vector<QpSolution> solve_batch_parallel(std::span<const QpProblem> problems, const QpOptions& opts) {
  std::vector<QpSolution> out(problems.size());
  const auto count = static_cast<std::int64_t>(problems.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t j = 0; j < count; ++j) {
    const auto idx = static_cast<std::size_t>(j);
    out[idx] = solve_qp(problems[idx], opts);
  }
  return out;
}

std::vector<double> centralized_values_serial(std::span<const LocalProblem> agents,
                                              std::span<const std::vector<Vector>> state_sets, const BoxSet& box,
                                              const QpOptions& opts) {
  std::vector<double> out(state_sets.size());
  for (std::size_t j = 0; j < state_sets.size(); ++j) out[j] = centralized_one(agents, state_sets[j], box, opts);
  return out;
}

std::vector<double> centralized_values_parallel(std::span<const LocalProblem> agents,
                                                std::span<const std::vector<Vector>> state_sets,
                                                const BoxSet& box, const QpOptions& opts) {
  std::vector<double> out(state_sets.size());
  const auto count = static_cast<std::int64_t>(state_sets.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t j = 0; j < count; ++j) {
    const auto idx = static_cast<std::size_t>(j);
    out[idx] = centralized_one(agents, state_sets[idx], box, opts);
  }
  return out;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace dmpc::kernels
