#include "dmpc/scenario.hpp"

#include <cmath>

namespace dmpc {

void ScenarioConfig::validate_structure() const {
  if (agents.empty()) throw ConfigError("scenario: no agents");
  if (initial_states.size() != agents.size()) throw ConfigError("scenario: one initial state per agent required");
  if (horizon < 1) throw ConfigError("scenario: horizon must be >= 1");
  if (steps < 1) throw ConfigError("scenario: steps must be >= 1");
  if (cycle_budget < 1) throw ConfigError("scenario: cycle_budget must be >= 1");
  if (!(converged_tol > 0.0)) throw ConfigError("scenario: converged_tol must be positive");
  if (freeze_theta_below && !(*freeze_theta_below > 0.0))
    throw ConfigError("scenario: freeze_theta_below must be positive");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("scenario: dt must be positive");
  theta_box.validate();
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const LinearAgent& a = agents[i];
    a.check_dimensions();
    if (a.p() != theta_box.dim())
      throw ConfigError("scenario: agent '" + a.name + "' output dimension differs from the consensus box");
    if (initial_states[i].size() != a.n())
      throw ConfigError("scenario: initial state of '" + a.name + "' has wrong dimension");
    if (!a.X.contains(initial_states[i], 1e-9))
      throw ConfigError("scenario: initial state of '" + a.name + "' violates its state constraints");
    for (std::size_t j = 0; j < i; ++j)
      if (agents[j].name == a.name) throw ConfigError("scenario: duplicate agent name '" + a.name + "'");
  }
  params.validate(theta_box);
}

std::vector<LocalProblem> ScenarioConfig::make_problems() const {
  std::vector<LocalProblem> out;
  out.reserve(agents.size());
  for (const auto& a : agents) out.emplace_back(a, horizon);
  return out;
}

}  // namespace dmpc
