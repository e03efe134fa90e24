#pragma once

// Batch evaluators over independent inputs. Each kernel has a serial
// reference and an OpenMP version; both write one output slot per input, so
// the results are identical regardless of thread count.

#include <span>
#include <vector>

#include "dmpc/centralized.hpp"
#include "dmpc/local_mpc.hpp"
#include "dmpc/qp.hpp"

namespace dmpc::kernels {

struct PointEval {
  bool feasible = false;
  double total_cost = 0.0;   // sum_i q^i(x^i, theta); NaN when infeasible
  double max_g_norm = 0.0;   // max_i ||g^i||; NaN when infeasible
};

/// sum_i q^i and max_i ||g^i|| at each theta.
std::vector<PointEval> evaluate_points_serial(std::span<const LocalProblem> agents,
                                              std::span<const Vector> states,
                                              std::span<const Vector> thetas, const QpOptions& opts = {});
std::vector<PointEval> evaluate_points_parallel(std::span<const LocalProblem> agents,
                                                std::span<const Vector> states,
                                                std::span<const Vector> thetas, const QpOptions& opts = {});

std::vector<QpSolution> solve_batch_serial(std::span<const QpProblem> problems, const QpOptions& opts = {});
std::vector<QpSolution> solve_batch_parallel(std::span<const QpProblem> problems, const QpOptions& opts = {});

/// J*(x) for each joint state; NaN when the centralized problem fails.
std::vector<double> centralized_values_serial(std::span<const LocalProblem> agents,
                                              std::span<const std::vector<Vector>> state_sets,
                                              const BoxSet& box, const QpOptions& opts = {});
std::vector<double> centralized_values_parallel(std::span<const LocalProblem> agents,
                                                std::span<const std::vector<Vector>> state_sets,
                                                const BoxSet& box, const QpOptions& opts = {});

int max_threads();

}  // namespace dmpc::kernels
