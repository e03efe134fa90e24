#pragma once

#include <span>
#include <vector>

#include "dmpc/local_mpc.hpp"

namespace dmpc {

class CentralizedInfeasibleError : public std::runtime_error {
 public:
  CentralizedInfeasibleError(QpStatus status)
      : std::runtime_error("centralized problem not solved (" + std::string(to_string(status)) + ")"),
        status_(status) {}
  QpStatus status() const { return status_; }

 private:
  QpStatus status_;
};

struct CentralizedSolution {
  Vector theta_star;
  std::vector<Matrix> Ustar;  // per agent, m x T
  double Jstar = 0.0;
  Vector box_duals;      // [upper bounds; lower bounds] on theta
  Vector lam_terminal;   // stacked terminal multipliers, agent order
  int iterations = 0;
};

/// Joint QP over (U^1, ..., U^N, theta): block-diagonal agent costs coupled
/// only through theta, per-agent terminal equalities, theta in the box.
CentralizedSolution solve_centralized(std::span<const LocalProblem> agents, std::span<const Vector> states,
                                      const BoxSet& box, const QpOptions& opts = {});

/// sum_i q^i(x^i, theta); throws LocalInfeasibleError.
double total_cost(std::span<const LocalProblem> agents, std::span<const Vector> states, const Vector& theta,
                  const QpOptions& opts = {});

}  // namespace dmpc
