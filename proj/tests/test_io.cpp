#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "dmpc/harness.hpp"
#include "dmpc/scenario_io.hpp"
#include "dmpc/trace_io.hpp"
#include "oracles.hpp"

using namespace dmpc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dmpc_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const char* kMinimal = R"({
  "name": "mini", "horizon": 3, "dt": 1.0, "steps": 4, "cycle_budget": 5, "converged_tol": 1e-7,
  "theta_box": {"lo": [-1], "hi": [1]},
  "negotiation": {"mu": 1, "beta": 10, "eps": 1, "max_cycles": 100, "theta0": [0]},
  "agents": [
    {"name": "a", "A": [[1, 1], [0, 1]], "B": [[0], [1]], "C": [[1, 0]], "Q": [[1, 0], [0, 1]], "R": [[1]],
     "X": {"lo": [-10, -3], "hi": [10, 3]}, "U": {"H": [[1], [-1]], "h": [2, 2]}, "x0": [0.5, 0]}
  ]
})";

std::string with(const std::string& from, const std::string& to) {
  std::string s = kMinimal;
  const auto pos = s.find(from);
  REQUIRE(pos != std::string::npos);
  return s.replace(pos, from.size(), to);
}

}  // namespace

TEST_CASE("number formatting") {
  CHECK(format_number(0.1) == "0.10000000000000001");
  CHECK(format_number(-2.0) == "-2");
  CHECK(format_number(std::nan("")) == "nan");
  CHECK(format_number(1e300 * 1e10) == "inf");
}

TEST_CASE("minimal scenario parses; polyhedron and box forms") {
  const ScenarioConfig sc = scenario_from_json(kMinimal);
  CHECK(sc.name == "mini");
  CHECK(sc.horizon == 3);
  CHECK(sc.agents.size() == 1);
  CHECK(sc.agents[0].U.H.rows() == 2);
  CHECK(sc.agents[0].X.H.rows() == 4);
  CHECK_FALSE(sc.freeze_theta_below.has_value());
  // U in {H, h} form happens to be a box, so it is written back compactly
  const ScenarioConfig again = scenario_from_json(scenario_to_json(sc));
  CHECK(again.agents[0].U.H == sc.agents[0].U.H);
  CHECK(scenario_to_json(again) == scenario_to_json(sc));
}

TEST_CASE("malformed scenarios are parse errors") {
  CHECK_THROWS_AS(scenario_from_json("{ not json"), ScenarioParseError);
  CHECK_THROWS_AS(scenario_from_json(with("\"dt\": 1.0, ", "")), ScenarioParseError);
  CHECK_THROWS_AS(scenario_from_json(with("\"name\": \"a\"", "\"name\": \"a b\"")), ScenarioParseError);
  CHECK_THROWS_AS(scenario_from_json(with("[[1, 1], [0, 1]]", "[[1, 1], [0]]")), ScenarioParseError);
  CHECK_THROWS_AS(scenario_from_json(with("\"horizon\": 3", "\"horizon\": 2.5")), ScenarioParseError);
  CHECK_THROWS_AS(scenario_from_json(with("\"x0\": [0.5, 0]", "\"x0\": [50, 0]")), ScenarioParseError);
  CHECK_THROWS_AS(scenario_from_json(with("\"U\": {\"H\"", "\"U\": {\"lo\": [0], \"H\"")), ScenarioParseError);
  CHECK_THROWS_AS(scenario_from_json(with("\"theta0\": [0]", "\"theta0\": [5]")), ScenarioParseError);
  try {
    scenario_from_json(with("\"dt\": 1.0, ", ""));
  } catch (const ScenarioParseError& e) {
    CHECK(std::string(e.what()).find("dt") != std::string::npos);
  }
}

TEST_CASE("built-in scenarios round-trip and match the shipped files") {
  for (const auto& name : builtin_scenario_names()) {
    const ScenarioConfig sc = builtin_scenario(name);
    const std::string text = scenario_to_json(sc);
    CHECK(scenario_to_json(scenario_from_json(text)) == text);
    const fs::path file = fs::path(DMPC_SOURCE_DIR) / "scenarios" / (name + ".json");
    REQUIRE(fs::exists(file));
    CHECK(read_file(file.string()) == text);
  }
}

TEST_CASE("CSV reader") {
  const CsvTable t = parse_csv("a,b\n1,2.5\nnan,3\n");
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  CHECK(t.rows.size() == 2);
  CHECK(t.number(0, "b") == 2.5);
  CHECK(std::isnan(t.number(1, "a")));
  CHECK(t.column("c") == -1);
  CHECK_THROWS(parse_csv("a,b\n1\n"));
  CHECK_THROWS(parse_csv(""));
}

TEST_CASE("atomic write leaves no temporary file") {
  const fs::path d = scratch("atomic");
  write_file_atomic((d / "x.txt").string(), "hello\n");
  CHECK(read_file((d / "x.txt").string()) == "hello\n");
  write_file_atomic((d / "x.txt").string(), "again\n");
  CHECK(read_file((d / "x.txt").string()) == "again\n");
  CHECK_FALSE(fs::exists(d / "x.txt.tmp"));
  CHECK_THROWS(read_file((d / "missing").string()));
}

TEST_CASE("trace files and figure series") {
  const ScenarioConfig sc = build_reference_scenario();
  RunOptions o;
  o.steps = 20;
  o.compute_oracle = true;
  const ClosedLoopLog log = algorithm1_run(sc, RunMode::interrupted(15), o);
  const auto pr = sc.make_problems();
  const CentralizedSolution cs = solve_centralized(pr, sc.initial_states, sc.theta_box);
  const fs::path d = scratch("traces");
  write_file_atomic((d / "closedloop.csv").string(), closedloop_csv(log, sc));
  write_file_atomic((d / "negotiation.csv").string(), negotiation_csv(log, sc));
  write_file_atomic((d / "centralized.csv").string(), centralized_csv(cs, pr, sc.initial_states));

  const CsvTable cl = parse_csv(read_file((d / "closedloop.csv").string()));
  REQUIRE(cl.rows.size() == 20);
  REQUIRE(cl.column("impl_mismatch_max") >= 0);
  for (std::size_t r = 0; r < cl.rows.size(); ++r) {
    CHECK(std::isfinite(cl.number(r, "impl_mismatch_max")));
    CHECK(std::isfinite(cl.number(r, "max_mismatch")));
  }
  const CsvTable ng = parse_csv(read_file((d / "negotiation.csv").string()));
  CHECK(ng.rows.size() == log.negotiation.size());

  const auto figs = plot_data(d.string());
  REQUIRE(figs.size() == 4);

  // fig1: terminal outputs of the centralized plan sit at theta*
  const CsvTable f1 = parse_csv(figs.at("fig1.csv"));
  int terminal = 0;
  for (std::size_t r = 0; r < f1.rows.size(); ++r) {
    if (f1.number(r, "k") != sc.horizon) continue;
    ++terminal;
    CHECK(std::abs(f1.number(r, "value") - cs.theta_star(0)) <= 1e-6);
  }
  CHECK(terminal == sc.size());

  // fig3: one theta entry per cycle run at t = 0
  const CsvTable f3 = parse_csv(figs.at("fig3.csv"));
  std::set<int> ks;
  for (std::size_t r = 0; r < f3.rows.size(); ++r)
    if (f3.rows[r][1] == "theta") ks.insert(static_cast<int>(f3.number(r, "k")));
  std::set<int> want;
  for (const auto& row : log.negotiation)
    if (row.t == 0) want.insert(row.k);
  CHECK(ks == want);

  // fig4: the last subiterate of agent 0 at each t is the closed-loop theta
  const CsvTable f4 = parse_csv(figs.at("fig4.csv"));
  std::map<int, double> last;
  for (std::size_t r = 0; r < f4.rows.size(); ++r) last[static_cast<int>(f4.number(r, "t"))] = f4.number(r, "value");
  for (const auto& [t, v] : last) CHECK(v == cl.number(static_cast<std::size_t>(t), "theta_left_0"));

  fs::remove(d / "negotiation.csv");
  CHECK_THROWS(plot_data(d.string()));
}
