#pragma once

#include <optional>
#include <vector>

#include "dmpc/agents.hpp"
#include "dmpc/qp.hpp"

namespace dmpc {

class LocalInfeasibleError : public std::runtime_error {
 public:
  LocalInfeasibleError(std::string agent, Vector theta, QpStatus status);
  const std::string& agent() const { return agent_; }
  const Vector& theta() const { return theta_; }
  QpStatus status() const { return status_; }

 private:
  std::string agent_;
  Vector theta_;
  QpStatus status_;
};

/// Condensed QP at a fixed (x0, theta). Decision vector is the stacked input
/// sequence [u_0; ...; u_{T-1}]. The equality block pins x_T = x_e(theta)
/// and the inequality block holds u_k in U (k = 0..T-1) followed by x_k in X
/// (k = 1..T).
struct LocalQp {
  QpProblem qp;
  double constant = 0.0;  // q = qp objective + constant
  Eigen::Index terminal_begin = 0;
  Eigen::Index terminal_rows = 0;
};

struct LocalMpcSolution {
  Matrix Useq;   // m x T
  Matrix Xtraj;  // n x (T+1)
  double qvalue = 0.0;
  Vector g;  // subgradient of theta -> q(x0, theta)
  Vector theta;
  Vector lam_terminal;
  QpStatus status = QpStatus::Optimal;
  std::vector<int> active_inequalities;
};

/// One agent's finite-horizon problem q(x0, theta) with everything that does
/// not depend on (x0, theta) precomputed.
///
/// The cost is a homogeneous quadratic v'Pv in v = (U, theta, x0): every
/// stage deviation x_k - Ex theta and u_k - Eu theta is linear in v. The
/// subgradient is the theta-derivative of the Lagrangian at the optimum:
///
///   g = 2 (P_tU U + P_tt theta + P_tx x0) - Ex' lam_terminal
///
/// where the last term comes from the terminal rows Gamma_T U - Ex theta = -A^T x0.
class LocalProblem {
 public:
  LocalProblem(LinearAgent agent, int horizon);

  const LinearAgent& agent() const { return agent_; }
  const EquilibriumMap& emap() const { return emap_; }
  int horizon() const { return horizon_; }
  Eigen::Index input_dim() const { return agent_.m() * horizon_; }

  LocalQp build(const Vector& x0, const Vector& theta) const;
  LocalMpcSolution solve(const Vector& x0, const Vector& theta, const QpOptions& opts = {}) const;
  /// Optimal value only; throws LocalInfeasibleError like solve().
  double cost(const Vector& x0, const Vector& theta, const QpOptions& opts = {}) const;

  /// Open-loop state trajectory (n x (T+1)) for an input sequence (m x T).
  Matrix predict(const Vector& x0, const Matrix& Useq) const;

  // Blocks of the joint quadratic, used to assemble the centralized problem.
  const Matrix& P() const { return P_; }
  Eigen::Index u_offset() const { return 0; }
  Eigen::Index theta_offset() const { return input_dim(); }
  Eigen::Index x0_offset() const { return input_dim() + agent_.p(); }
  /// x_T = Phi_T x0 + Gamma_T U
  const Matrix& terminal_gamma() const { return gamma_T_; }
  const Matrix& terminal_phi() const { return phi_T_; }
  /// Inequalities G U <= b0 + Gx x0
  const Matrix& ineq_G() const { return G_; }
  const Vector& ineq_b0() const { return b0_; }
  const Matrix& ineq_Gx() const { return Gx_; }

 private:
  void check_inputs(const Vector& x0, const Vector& theta) const;

  LinearAgent agent_;
  EquilibriumMap emap_;
  int horizon_;
  Matrix P_;
  Matrix gamma_T_;
  Matrix phi_T_;
  Matrix G_;
  Vector b0_;
  Matrix Gx_;
};

LocalQp build_local_qp(const LocalProblem& problem, const Vector& x0, const Vector& theta);
LocalMpcSolution solve_local(const LocalProblem& problem, const Vector& x0, const Vector& theta,
                             const QpOptions& opts = {});

struct FdSubgradient {
  Vector g;
  std::vector<bool> one_sided;  // per coordinate: a perturbation was infeasible
};

/// Central differences (q(theta + h e_j) - q(theta - h e_j)) / 2h with
/// h_j = step * (1 + |theta_j|). Falls back to a one-sided difference when a
/// perturbed point is infeasible.
FdSubgradient subgradient_fd_oracle(const LocalProblem& problem, const Vector& x0, const Vector& theta,
                                    double step = 1e-5, const QpOptions& opts = {});

}  // namespace dmpc
