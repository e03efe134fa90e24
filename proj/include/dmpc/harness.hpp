#pragma once

#include <span>
#include <string>
#include <vector>

#include "dmpc/centralized.hpp"
#include "dmpc/ring.hpp"
#include "dmpc/scenario.hpp"

namespace dmpc {

struct GridSearchResult {
  Vector theta_best;
  double value = 0.0;
  double resolution = 0.0;  // achieved grid spacing (max over axes)
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // infeasible for some agent
  std::vector<std::string> skipped_log;
  /// Points farther than one resolution step from theta_best whose value is
  /// within 1e-9 (1 + |value|) of it.
  std::vector<Vector> ties;
};

/// Brute-force minimization of sum_i q^i(x^i, theta) over a regular grid
/// on the box (p <= 2). A coarse pass is refined around its best point
/// until the spacing reaches `resolution`, so the full fine grid is never
/// built. Each point costs N independent local solves.
GridSearchResult grid_search_theta(std::span<const LocalProblem> agents, std::span<const Vector> states,
                                   const BoxSet& box, double resolution, bool parallel = true,
                                   const QpOptions& opts = {});

/// Same search on a single uniform grid (no refinement). Used to check the
/// refinement on small instances.
GridSearchResult grid_search_theta_exhaustive(std::span<const LocalProblem> agents,
                                              std::span<const Vector> states, const BoxSet& box,
                                              double resolution, bool parallel = true,
                                              const QpOptions& opts = {});

struct LyapunovReport {
  std::vector<double> Jstar;       // J*(x_t), t = 0..S (last entry: final state)
  std::vector<double> increase;    // J*(x_{t+1}) - J*(x_t)
  std::vector<double> stage_impl;  // sum_i stage cost of (x_t, u_t) w.r.t. the executed plan's theta
  std::vector<double> stage_opt;   // same w.r.t. theta_t*
  std::vector<double> margin;      // (J*(x_t) - J*(x_{t+1})) - stage_impl
  std::vector<Vector> theta_star;
  double max_increase = 0.0;
  double min_margin = 0.0;
  double increase_tol = 0.0;  // 1e-6 (1 + J*(x_0))
  bool monotone = true;
  bool decrease_ok = true;
};

LyapunovReport lyapunov_report(const ClosedLoopLog& log, std::span<const LocalProblem> agents,
                               const BoxSet& box, bool parallel = true, const QpOptions& opts = {});

/// Three double integrators on a line at positions -1, 0, 2 with equal
/// weights and loose constraints; scalar consensus on position.
ScenarioConfig build_reference_scenario();

/// Tanker and two fighters, consensus on (altitude, airspeed) deviations.
/// Uses 2-state stand-in longitudinal models (see the scenario description).
ScenarioConfig build_refueling_scenario();

/// Refueling scenario with all three aircraft sharing one model, one set of
/// weights and one set of input bounds. Only the initial states differ.
ScenarioConfig build_refueling_equalized_scenario();

/// Fills mu, beta from estimate_parameters at the initial states and sets
/// eps so that the accuracy test can pass within the cycle budget at every
/// sampling instant of the run.
void calibrate_parameters(ScenarioConfig& sc, int samples = 41, const QpOptions& opts = {});

ScenarioConfig builtin_scenario(const std::string& name);
std::vector<std::string> builtin_scenario_names();

}  // namespace dmpc
