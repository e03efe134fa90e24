#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dmpc/scenario.hpp"

namespace dmpc::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes.
enum : int { kOk = 0, kDomainFailure = 1, kUsage = 2 };

struct CheckItem {
  std::string name;
  bool passed = true;
  std::string detail;
};

/// Agent checks, equilibrium interior margin at the corners of the theta
/// box, and a reachability smoke test (a local solve from every initial
/// state to every corner).
struct ScenarioCheck {
  std::vector<CheckItem> items;
  bool passed() const;
  const CheckItem* first_failure() const;
};

ScenarioCheck check_scenario(const ScenarioConfig& sc);

/// "builtin:<name>" or a path to a JSON scenario file.
ScenarioConfig resolve_scenario(const std::string& source);

/// 64-bit FNV-1a of the canonical JSON form, as 16 hex digits.
std::string scenario_hash(const ScenarioConfig& sc);

/// Entry point without the program name: run({"validate", "builtin:reference"}, ...).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dmpc::cli
