#pragma once

// Scenario files are JSON. Matrices are arrays of rows; sets are either
// {"lo": [...], "hi": [...]} boxes or {"H": [[...]], "h": [...]} polyhedra.
// Physical quantities have no defaults: a missing field is an error.

#include <stdexcept>
#include <string>

#include "dmpc/scenario.hpp"

namespace dmpc {

/// Malformed file: bad JSON, missing or mistyped fields, inconsistent
/// dimensions.
class ScenarioParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ScenarioConfig scenario_from_json(const std::string& text);
std::string scenario_to_json(const ScenarioConfig& sc);

ScenarioConfig load_scenario(const std::string& path);
void save_scenario(const ScenarioConfig& sc, const std::string& path);

}  // namespace dmpc
