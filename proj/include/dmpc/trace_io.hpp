#pragma once

// Output files of a run. CSV numbers use 17 significant digits, booleans
// are 0/1, missing values are "nan".
//
//   closedloop.csv   one row per sampling instant t
//   negotiation.csv  one row per subiteration: t, k, agent, theta_*, g_norm, alpha, bound, q
//   centralized.csv  open-loop centralized solution from the initial states
//   summary.json     final consensus, mismatch curve, Lyapunov report

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dmpc/harness.hpp"

namespace dmpc {

std::string format_number(double v);

std::string closedloop_csv(const ClosedLoopLog& log, const ScenarioConfig& sc);
std::string negotiation_csv(const ClosedLoopLog& log, const ScenarioConfig& sc);
std::string centralized_csv(const CentralizedSolution& cs, std::span<const LocalProblem> problems,
                            std::span<const Vector> states);
std::string summary_json(const ClosedLoopLog& log, const ScenarioConfig& sc,
                         const std::optional<LyapunovReport>& lyap);

/// Writes via a temporary file and rename, so readers never see a partial file.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

/// Minimal reader for the CSVs above (no quoting).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int column(const std::string& name) const;  // -1 if absent
  double number(std::size_t row, const std::string& name) const;
};
CsvTable parse_csv(const std::string& text);

/// Long-format series for the four figures, keyed by file name
/// (fig1.csv .. fig4.csv). Needs closedloop.csv, negotiation.csv and
/// centralized.csv in `trace_dir`.
std::map<std::string, std::string> plot_data(const std::string& trace_dir);

}  // namespace dmpc
