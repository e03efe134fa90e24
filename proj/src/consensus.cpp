#include "dmpc/consensus.hpp"

#include <algorithm>
#include <cmath>

#include "dmpc/centralized.hpp"
#include "dmpc/kernels.hpp"

namespace dmpc {

void NegotiationParams::validate(const BoxSet& box) const {
  if (!(mu > 0.0) || !std::isfinite(mu)) throw ConfigError("negotiation: mu must be positive");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("negotiation: beta must be positive");
  if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError("negotiation: eps must be positive");
  if (max_cycles < 1) throw ConfigError("negotiation: max_cycles must be >= 1");
  if (theta0.size() != box.dim()) throw ConfigError("negotiation: theta0 dimension mismatch");
  if (!box.contains(theta0)) throw ConfigError("negotiation: theta0 outside the consensus box");
}

Vector project_theta(const BoxSet& box, const Vector& theta) {
  if (theta.size() != box.dim()) throw ConfigError("project_theta: dimension mismatch");
  return theta.cwiseMax(box.lo).cwiseMin(box.hi);
}

double stepsize(int k, double mu) {
  if (k < 0 || !(mu > 0.0)) throw ConfigError("stepsize: need k >= 0 and mu > 0");
  return 1.0 / (2.0 * mu * (k + 1.0));
}

double convergence_bound(int k, int N, double beta, double mu) {
  if (k < 0 || N < 1 || !(mu > 0.0)) throw ConfigError("convergence_bound: bad arguments");
  const double kk = k + 1.0;
  return (1.0 + std::log(kk)) / kk * (double(N) * N * beta * beta) / (4.0 * mu * mu);
}

CycleTrace subgradient_cycle(std::span<const LocalProblem> agents, std::span<const Vector> states,
                             const Vector& theta_k, int k, const NegotiationParams& params, const BoxSet& box,
                             const QpOptions& opts) {
  if (agents.size() != states.size()) throw ConfigError("subgradient_cycle: one state per agent required");
  CycleTrace tr;
  tr.k = k;
  tr.alpha = stepsize(k, params.mu);
  tr.theta_before = theta_k;
  Vector v = theta_k;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const LocalMpcSolution s = agents[i].solve(states[i], v, opts);
    Subiterate si;
    si.agent = static_cast<int>(i);
    si.g = s.g;
    si.q = s.qvalue;
    v = project_theta(box, v - tr.alpha * s.g);
    si.theta = v;
    tr.subiterates.push_back(std::move(si));
  }
  tr.theta_after = v;
  return tr;
}

std::vector<CycleTrace> negotiate(std::span<const LocalProblem> agents, std::span<const Vector> states,
                                  const BoxSet& box, const NegotiationParams& params, int cycles,
                                  const QpOptions& opts) {
  params.validate(box);
  std::vector<CycleTrace> out;
  out.reserve(static_cast<std::size_t>(std::max(cycles, 0)));
  Vector theta = params.theta0;
  for (int k = 0; k < cycles; ++k) {
    out.push_back(subgradient_cycle(agents, states, theta, k, params, box, opts));
    theta = out.back().theta_after;
  }
  return out;
}

std::vector<Vector> box_grid(const BoxSet& box, int per_axis) {
  box.validate();
  if (per_axis < 1) throw ConfigError("box_grid: need at least one point per axis");
  const Eigen::Index p = box.dim();
  std::vector<int> counts(static_cast<std::size_t>(p));
  std::size_t total = 1;
  for (Eigen::Index j = 0; j < p; ++j) {
    counts[j] = box.lo(j) == box.hi(j) ? 1 : std::max(per_axis, 2);
    total *= static_cast<std::size_t>(counts[j]);
  }
  std::vector<Vector> out;
  out.reserve(total);
  std::vector<int> idx(static_cast<std::size_t>(p), 0);
  for (std::size_t n = 0; n < total; ++n) {
    Vector th(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      if (counts[j] == 1) {
        th(j) = box.lo(j);
      } else {
        const double s = double(idx[j]) / (counts[j] - 1);
        // hit the bounds exactly
        th(j) = idx[j] == counts[j] - 1 ? box.hi(j) : box.lo(j) + s * (box.hi(j) - box.lo(j));
      }
    }
    out.push_back(std::move(th));
    for (Eigen::Index j = 0; j < p; ++j) {
      if (++idx[j] < counts[j]) break;
      idx[j] = 0;
    }
  }
  return out;
}

ParameterEstimate estimate_parameters(std::span<const LocalProblem> agents, std::span<const Vector> states,
                                      const BoxSet& box, int samples, const QpOptions& opts) {
  if (samples < 10) throw ConfigError("estimate_parameters: need at least 10 samples");
  box.validate();
  const Eigen::Index p = box.dim();
  const int per_axis = std::max(2, static_cast<int>(std::ceil(std::pow(double(samples), 1.0 / double(p)) - 1e-9)));
  const std::vector<Vector> grid = box_grid(box, per_axis);

  const CentralizedSolution cs = solve_centralized(agents, states, box, opts);
  ParameterEstimate est;
  est.theta_star = cs.theta_star;
  est.q_star = cs.Jstar;

  const auto evals = kernels::evaluate_points_parallel(agents, states, grid, opts);
  double mu = std::numeric_limits<double>::infinity();
  const double dist_floor = 1e-9 * (1.0 + (box.hi - box.lo).norm());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (!evals[j].feasible) {
      ++est.infeasible;
      continue;
    }
    ++est.samples;
    est.max_g_norm = std::max(est.max_g_norm, evals[j].max_g_norm);
    const double d = (grid[j] - cs.theta_star).norm();
    if (d > dist_floor) mu = std::min(mu, (evals[j].total_cost - cs.Jstar) / (d * d));
  }
  est.beta_hat = std::max(1.5 * est.max_g_norm, 1e-9);
  est.mu_hat = std::isfinite(mu) ? std::max(mu, 1e-6) : 1e-6;
  return est;
}

}  // namespace dmpc
