#pragma once

#include <string_view>
#include <vector>

#include "dmpc/linalg.hpp"

namespace dmpc {

/// Convex QP in standard form:
///
///   minimize    1/2 z'Hz + f'z
///   subject to  Aeq z  = beq
///               Ain z <= bin
///
/// Empty constraint blocks are 0 x d matrices with 0-length right-hand sides.
struct QpProblem {
  Matrix H;
  Vector f;
  Matrix Aeq;
  Vector beq;
  Matrix Ain;
  Vector bin;

  Eigen::Index dim() const { return f.size(); }
};

enum class QpStatus { Optimal, Infeasible, Unbounded, MaxIter };

std::string_view to_string(QpStatus status);

struct QpOptions {
  double tol = 1e-8;
  int max_iter = 10'000;
};

/// Primal optimizer and Lagrange multipliers.
///
/// Dual convention: L(z, lam, mu) = 1/2 z'Hz + f'z + lam'(Aeq z - beq) + mu'(Ain z - bin)
/// with mu >= 0, so at an optimum  Hz + f + Aeq' lam + Ain' mu = 0.
struct QpSolution {
  Vector z;
  double value = 0.0;
  Vector lam_eq;
  Vector mu_in;
  QpStatus status = QpStatus::MaxIter;
  std::vector<int> active;  // inequality rows in the final working set, ascending
  int iterations = 0;
};

/// Throws ConfigError on inconsistent dimensions, asymmetric H, or H not PSD
/// (minimum eigenvalue below -1e-9 * ||H||).
void check_qp(const QpProblem& p);

/// Primal active-set method on a diagonally scaled copy of the problem.
/// Phase 1 is an LP on (z, s) that minimizes the largest inequality violation.
/// Positive definite Hessians take a range-space (Schur complement) step; PSD
/// Hessians use a null-space step with zero-curvature descent rays, which is
/// also how unboundedness is detected.
QpSolution solve_qp(const QpProblem& p, const QpOptions& opts = {});

struct KktReport {
  double stationarity = 0.0;     // ||Hz + f + Aeq'lam + Ain'mu||_inf
  double eq_residual = 0.0;      // ||Aeq z - beq||_inf
  double in_violation = 0.0;     // max(0, max(Ain z - bin))
  double min_multiplier = 0.0;   // min(mu), 0 when there are no inequalities
  double complementarity = 0.0;  // |mu'(Ain z - bin)|

  /// Tolerances of an Optimal solution.
  bool acceptable(const QpProblem& p) const;
};

KktReport kkt_report(const QpProblem& p, const QpSolution& s);

}  // namespace dmpc
