#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dmpc/consensus.hpp"
#include "dmpc/local_mpc.hpp"

namespace dmpc {

struct ScenarioConfig {
  std::string name;
  std::string description;
  std::vector<LinearAgent> agents;  // ring order = declaration order
  std::vector<Vector> initial_states;
  BoxSet theta_box;
  int horizon = 1;
  NegotiationParams params;
  int steps = 1;
  int cycle_budget = 15;        // interrupted mode, cycles per sampling instant
  double converged_tol = 1e-7;  // fully converged mode, ||theta(k+1) - theta(k)||
  std::optional<double> freeze_theta_below;
  double dt = 1.0;  // sampling time [s], informational

  /// Dimensions, shared output dimension, initial states inside X, params.
  void validate_structure() const;
  std::vector<LocalProblem> make_problems() const;
  int size() const { return static_cast<int>(agents.size()); }
};

}  // namespace dmpc
