#pragma once

// Projected incremental subgradient negotiation over a ring of agents.

#include <span>
#include <vector>

#include "dmpc/agents.hpp"
#include "dmpc/local_mpc.hpp"

namespace dmpc {

struct NegotiationParams {
  double mu = 1.0;    // strong convexity constant of sum_i q^i around its minimizer
  double beta = 1.0;  // bound on ||g^i|| over the box
  double eps = 1.0;   // accuracy target; eps/(t+1) at sampling instant t
  int max_cycles = 10000;
  Vector theta0;

  void validate(const BoxSet& box) const;
};

struct Subiterate {
  int agent = 0;
  Vector theta;  // vartheta^i(k), after the projected step
  Vector g;      // subgradient of q^i at vartheta^{i-1}(k)
  double q = 0.0;  // q^i at vartheta^{i-1}(k)
};

struct CycleTrace {
  int k = 0;
  double alpha = 0.0;
  Vector theta_before;
  Vector theta_after;
  std::vector<Subiterate> subiterates;  // ring order, one per agent
};

/// Componentwise clamp.
Vector project_theta(const BoxSet& box, const Vector& theta);

/// 1 / (2 mu (k+1))
double stepsize(int k, double mu);

/// (1 + ln(k+1)) / (k+1) * N^2 beta^2 / (4 mu^2)
double convergence_bound(int k, int N, double beta, double mu);

/// One pass around the ring starting from theta_k. LocalInfeasibleError
/// propagates with the offending agent and subiterate.
CycleTrace subgradient_cycle(std::span<const LocalProblem> agents, std::span<const Vector> states,
                             const Vector& theta_k, int k, const NegotiationParams& params, const BoxSet& box,
                             const QpOptions& opts = {});

/// `cycles` consecutive cycles from params.theta0.
std::vector<CycleTrace> negotiate(std::span<const LocalProblem> agents, std::span<const Vector> states,
                                  const BoxSet& box, const NegotiationParams& params, int cycles,
                                  const QpOptions& opts = {});

struct ParameterEstimate {
  double beta_hat = 0.0;
  double mu_hat = 0.0;
  double max_g_norm = 0.0;
  Vector theta_star;
  double q_star = 0.0;
  int samples = 0;     // grid points evaluated
  int infeasible = 0;  // grid points skipped
};

/// Heuristic estimates from a grid over the box (corners included):
///   beta_hat = 1.5 max ||g^i||              (floor 1e-9)
///   mu_hat   = min (sum q - q*) / dist^2     (floor 1e-6)
/// with theta*, q* from the centralized problem.
ParameterEstimate estimate_parameters(std::span<const LocalProblem> agents, std::span<const Vector> states,
                                      const BoxSet& box, int samples, const QpOptions& opts = {});

/// Grid with `per_axis` points on every axis, bounds included. Axis 0
/// varies fastest. A degenerate axis (lo == hi) contributes one point.
std::vector<Vector> box_grid(const BoxSet& box, int per_axis);

}  // namespace dmpc
