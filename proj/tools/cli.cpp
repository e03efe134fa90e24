#include "cli.hpp"

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "dmpc/harness.hpp"
#include "dmpc/scenario_io.hpp"
#include "dmpc/trace_io.hpp"

namespace dmpc::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Bad input that should map to the usage/parse exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Domain failure already reported to the user.
struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string vec_str(const Vector& v) {
  std::string s = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += format_number(v(i));
  }
  return s + "]";
}

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_st>(err);
  sink->set_pattern("[%l] %v");
  auto log = std::make_shared<spdlog::logger>("dmpc", sink);
  log->set_level(spdlog::level::warn);
  if (const char* env = std::getenv("DMPC_LOG")) {
    const auto lvl = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only accept real names
    if (lvl != spdlog::level::off || std::string(env) == "off")
      log->set_level(lvl);
    else
      log->warn("DMPC_LOG='{}' not recognised, using warn", env);
  }
  return log;
}

// Everything the run command needs; also what the manifest records.
struct RunSpec {
  std::string scenario;
  std::string mode = "interrupted";
  std::optional<int> cycles;
  std::optional<double> tol;
  std::optional<int> steps;
  bool compare_oracle = false;
  std::optional<double> freeze;
  bool events = false;
  bool force = false;
};

json manifest_json(const RunSpec& rs, const ScenarioConfig& sc, const RunMode& mode, int steps,
                   const std::vector<std::string>& outputs) {
  json m;
  m["tool"] = "dmpc";
  m["version"] = kVersion;
  m["command"] = "run";
  m["scenario"] = {{"source", rs.scenario}, {"name", sc.name}, {"hash", scenario_hash(sc)}};
  m["mode"] = mode.name();
  m["cycle_budget"] = mode.kind == RunMode::Kind::Interrupted ? json(mode.cycle_budget) : json(nullptr);
  m["tol"] = mode.kind == RunMode::Kind::FullyConverged ? json(mode.tol) : json(nullptr);
  m["steps"] = steps;
  m["compare_oracle"] = rs.compare_oracle;
  m["freeze_theta_below"] = rs.freeze ? json(*rs.freeze) : json(nullptr);
  m["events"] = rs.events;
  m["force"] = rs.force;
  m["outputs"] = outputs;
  m["determinism"] =
      "no random numbers are drawn; the closed loop runs on one thread and the parallel oracle loops write "
      "results by index, so the same manifest yields byte-identical outputs";
  return m;
}

RunSpec spec_from_manifest(const std::string& path) {
  json m;
  try {
    m = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw UsageError("manifest '" + path + "': " + e.what());
  } catch (const std::runtime_error& e) {
    throw UsageError(e.what());
  }
  try {
    if (m.at("command") != "run") throw UsageError("manifest '" + path + "' is not a run manifest");
    RunSpec rs;
    rs.scenario = m.at("scenario").at("source").get<std::string>();
    rs.mode = m.at("mode").get<std::string>();
    if (!m.at("cycle_budget").is_null()) rs.cycles = m["cycle_budget"].get<int>();
    if (!m.at("tol").is_null()) rs.tol = m["tol"].get<double>();
    rs.steps = m.at("steps").get<int>();
    rs.compare_oracle = m.at("compare_oracle").get<bool>();
    if (!m.at("freeze_theta_below").is_null()) rs.freeze = m["freeze_theta_below"].get<double>();
    rs.events = m.at("events").get<bool>();
    rs.force = m.at("force").get<bool>();
    const ScenarioConfig sc = resolve_scenario(rs.scenario);
    const std::string want = m.at("scenario").at("hash").get<std::string>();
    if (scenario_hash(sc) != want)
      throw Failure("scenario '" + rs.scenario + "' changed since the manifest was written (hash " +
                    scenario_hash(sc) + ", manifest " + want + ")");
    return rs;
  } catch (const json::exception& e) {
    throw UsageError("manifest '" + path + "': " + e.what());
  }
}

void print_check(const ScenarioCheck& c, std::ostream& out) {
  for (const auto& it : c.items)
    out << (it.passed ? "ok   " : "FAIL ") << it.name << (it.detail.empty() ? "" : ": " + it.detail) << "\n";
}

int cmd_validate(const std::string& source, std::ostream& out, std::ostream& err) {
  const ScenarioConfig sc = resolve_scenario(source);
  const ScenarioCheck c = check_scenario(sc);
  print_check(c, out);
  if (const CheckItem* f = c.first_failure()) {
    err << "validation failed: " << f->name << ": " << f->detail << "\n";
    return kDomainFailure;
  }
  out << "scenario '" << sc.name << "' is valid\n";
  return kOk;
}

int cmd_run(const RunSpec& rs, const std::string& out_dir, spdlog::logger& log, std::ostream& out,
            std::ostream& err) {
  ScenarioConfig sc = resolve_scenario(rs.scenario);

  RunMode mode;
  if (rs.mode == "interrupted") {
    mode = RunMode::interrupted(rs.cycles.value_or(sc.cycle_budget));
    if (rs.tol) throw UsageError("--tol applies to --mode converged");
  } else if (rs.mode == "converged") {
    mode = RunMode::fully_converged(rs.tol.value_or(sc.converged_tol));
    if (rs.cycles) throw UsageError("--cycles applies to --mode interrupted");
  } else {
    throw UsageError("--mode must be 'converged' or 'interrupted'");
  }
  if (mode.kind == RunMode::Kind::Interrupted && mode.cycle_budget < 1) throw UsageError("--cycles must be >= 1");
  if (mode.kind == RunMode::Kind::FullyConverged && !(mode.tol > 0)) throw UsageError("--tol must be > 0");
  const int steps = rs.steps.value_or(sc.steps);
  if (steps < 1) throw UsageError("--steps must be >= 1");
  if (rs.freeze && !(*rs.freeze >= 0)) throw UsageError("--freeze-theta-below must be >= 0");

  const ScenarioCheck check = check_scenario(sc);
  if (const CheckItem* f = check.first_failure()) {
    if (!rs.force) {
      print_check(check, err);
      err << "validation failed: " << f->name << ": " << f->detail << " (use --force to run anyway)\n";
      return kDomainFailure;
    }
    log.warn("running despite failed check '{}': {}", f->name, f->detail);
  }

  fs::create_directories(out_dir);
  std::vector<std::string> outputs = {"closedloop.csv", "negotiation.csv", "centralized.csv", "summary.json"};
  if (rs.events) outputs.push_back("events.log");
  const fs::path dir(out_dir);
  write_file_atomic((dir / "manifest.json").string(),
                    manifest_json(rs, sc, mode, steps, outputs).dump(2) + "\n");

  RunOptions opts;
  opts.steps = steps;
  opts.compute_oracle = rs.compare_oracle;
  opts.record_events = rs.events;
  opts.freeze_theta_below = rs.freeze;

  log.info("scenario '{}' ({} agents), mode {}, {} steps", sc.name, sc.size(), mode.name(), steps);
  const ClosedLoopLog cl = algorithm1_run(sc, mode, opts);
  for (const auto& w : cl.warnings) log.warn("{}", w);

  const auto problems = sc.make_problems();
  const CentralizedSolution cs = solve_centralized(problems, sc.initial_states, sc.theta_box);
  std::optional<LyapunovReport> lyap;
  if (mode.kind == RunMode::Kind::FullyConverged || rs.compare_oracle) {
    log.info("computing J* along the trajectory");
    lyap = lyapunov_report(cl, problems, sc.theta_box);
  }

  write_file_atomic((dir / "closedloop.csv").string(), closedloop_csv(cl, sc));
  write_file_atomic((dir / "negotiation.csv").string(), negotiation_csv(cl, sc));
  write_file_atomic((dir / "centralized.csv").string(), centralized_csv(cs, problems, sc.initial_states));
  write_file_atomic((dir / "summary.json").string(), summary_json(cl, sc, lyap));
  if (rs.events) {
    std::string ev;
    for (const auto& e : cl.events) ev += e + "\n";
    write_file_atomic((dir / "events.log").string(), ev);
  }

  int implemented = 0;
  for (const auto& s : cl.steps) implemented += s.implemented;
  out << "mode " << mode.name() << ": " << cl.steps.size() << " steps, " << implemented << " implementations\n";
  for (std::size_t i = 0; i < sc.agents.size(); ++i)
    out << "  " << sc.agents[i].name << " final output " << vec_str(sc.agents[i].C * cl.final_states[i]) << "\n";
  out << "  centralized theta* " << vec_str(cs.theta_star) << "\n";
  if (lyap)
    out << "  J* monotone: " << (lyap->monotone ? "yes" : "no") << ", decrease bound: "
        << (lyap->decrease_ok ? "yes" : "no") << "\n";
  out << "traces written to " << out_dir << "\n";
  return kOk;
}

int cmd_plotdata(const std::string& trace_dir, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  std::map<std::string, std::string> figs;
  try {
    figs = plot_data(trace_dir);
  } catch (const std::exception& e) {
    err << "plotdata: " << e.what() << "\n";
    return kDomainFailure;
  }
  fs::create_directories(out_dir);
  for (const auto& [name, content] : figs) {
    write_file_atomic((fs::path(out_dir) / name).string(), content);
    out << "wrote " << (fs::path(out_dir) / name).string() << "\n";
  }
  return kOk;
}

int cmd_oracle(const std::string& source, double resolution, int samples, const std::string& out_file,
               std::ostream& out, std::ostream& err) {
  const ScenarioConfig sc = resolve_scenario(source);
  const auto problems = sc.make_problems();
  const CentralizedSolution cs = solve_centralized(problems, sc.initial_states, sc.theta_box);
  json j;
  j["scenario"] = sc.name;
  j["centralized"] = {{"theta_star", vec_json(cs.theta_star)}, {"Jstar", cs.Jstar}};
  bool ok = true;
  if (sc.theta_box.dim() <= 2) {
    const GridSearchResult g = grid_search_theta(problems, sc.initial_states, sc.theta_box, resolution);
    const double dist = (g.theta_best - cs.theta_star).norm();
    json ties = json::array();
    for (const auto& t : g.ties) ties.push_back(vec_json(t));
    j["grid"] = {{"theta_best", vec_json(g.theta_best)},
                 {"value", g.value},
                 {"resolution", g.resolution},
                 {"evaluated", g.evaluated},
                 {"skipped", g.skipped},
                 {"ties", ties},
                 {"distance_to_centralized", dist}};
    // a grid point can never beat the joint optimum
    if (g.value < cs.Jstar - 1e-6 * (1.0 + std::abs(cs.Jstar))) {
      ok = false;
      err << "oracle disagreement: grid value " << format_number(g.value) << " below centralized J* "
          << format_number(cs.Jstar) << "\n";
    }
  } else {
    j["grid"] = nullptr;
  }
  const ParameterEstimate pe = estimate_parameters(problems, sc.initial_states, sc.theta_box, samples);
  j["estimates"] = {{"beta_hat", pe.beta_hat},
                    {"mu_hat", pe.mu_hat},
                    {"max_g_norm", pe.max_g_norm},
                    {"samples", pe.samples},
                    {"infeasible", pe.infeasible}};
  const std::string text = j.dump(2) + "\n";
  if (out_file.empty())
    out << text;
  else
    write_file_atomic(out_file, text);
  return ok ? kOk : kDomainFailure;
}

int cmd_export(const std::string& name, bool list, const std::string& out_file, std::ostream& out) {
  if (list) {
    for (const auto& n : builtin_scenario_names()) out << n << "\n";
    return kOk;
  }
  if (name.empty()) throw UsageError("export-scenario: give a built-in name or --list");
  const ScenarioConfig sc = resolve_scenario("builtin:" + name);
  const std::string text = scenario_to_json(sc);
  if (out_file.empty())
    out << text;
  else
    write_file_atomic(out_file, text);
  return kOk;
}

}  // namespace

bool ScenarioCheck::passed() const { return first_failure() == nullptr; }

const CheckItem* ScenarioCheck::first_failure() const {
  for (const auto& it : items)
    if (!it.passed) return &it;
  return nullptr;
}

ScenarioCheck check_scenario(const ScenarioConfig& sc) {
  ScenarioCheck c;
  try {
    sc.validate_structure();
    c.items.push_back({"structure", true, ""});
  } catch (const std::exception& e) {
    c.items.push_back({"structure", false, e.what()});
    return c;
  }
  bool agents_ok = true;
  for (const auto& a : sc.agents) {
    const ValidationReport r = validate_agent(a);
    c.items.push_back({"agent " + a.name, r.passed(), r.first_failure()});
    agents_ok = agents_ok && r.passed();
  }
  if (!agents_ok) return c;
  for (const auto& a : sc.agents) {
    const InteriorReport r = check_equilibria_interior(a, equilibrium_map(a), sc.theta_box);
    c.items.push_back({"equilibria interior " + a.name, r.passed, r.detail});
  }
  const auto problems = sc.make_problems();
  const auto corners = sc.theta_box.vertices();
  CheckItem reach{"reachability", true, ""};
  for (std::size_t i = 0; i < problems.size() && reach.passed; ++i) {
    for (const auto& v : corners) {
      try {
        problems[i].solve(sc.initial_states[i], v);
      } catch (const LocalInfeasibleError& e) {
        reach.passed = false;
        reach.detail = "infeasible at vertex " + vec_str(v) + " for agent " + sc.agents[i].name + " (" +
                       std::string(to_string(e.status())) + ", horizon " + std::to_string(sc.horizon) + ")";
        break;
      }
    }
  }
  if (reach.passed)
    reach.detail = std::to_string(corners.size()) + " vertices x " + std::to_string(problems.size()) + " agents";
  c.items.push_back(reach);
  return c;
}

ScenarioConfig resolve_scenario(const std::string& source) {
  const std::string prefix = "builtin:";
  if (source.rfind(prefix, 0) == 0) {
    try {
      return builtin_scenario(source.substr(prefix.size()));
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
  }
  return load_scenario(source);
}

std::string scenario_hash(const ScenarioConfig& sc) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : scenario_to_json(sc)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto log = make_logger(err);

  CLI::App app{"Distributed model-predictive consensus simulator", "dmpc"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string scenario, trace_dir, out_dir, out_file, manifest, export_name;
  RunSpec rs;
  int cycles = 0, steps = 0, samples = 41;
  double tol = 0.0, freeze = 0.0, resolution = 1e-3;
  bool list = false;

  auto* v = app.add_subcommand("validate", "Check a scenario: agents, equilibria, reachability");
  v->add_option("scenario", scenario, "Scenario file or builtin:<name>")->required();

  auto* r = app.add_subcommand("run", "Closed-loop run; writes traces to --out");
  r->add_option("scenario", rs.scenario, "Scenario file or builtin:<name>");
  r->add_option("--manifest", manifest, "Repeat the run recorded in a manifest.json");
  r->add_option("--mode", rs.mode, "converged or interrupted")->check(CLI::IsMember({"converged", "interrupted"}));
  auto* o_cycles = r->add_option("--cycles", cycles, "Cycle budget per sampling instant (interrupted)");
  auto* o_tol = r->add_option("--tol", tol, "Stop when ||theta(k+1) - theta(k)|| <= tol (converged)");
  auto* o_steps = r->add_option("--steps", steps, "Number of sampling instants");
  r->add_flag("--compare-oracle", rs.compare_oracle, "Solve the centralized problem at every t");
  auto* o_freeze =
      r->add_option("--freeze-theta-below", freeze, "Stop negotiating once eps/(t+1) drops below this value");
  r->add_flag("--events", rs.events, "Also write the token event log");
  r->add_flag("--force", rs.force, "Run even if validation fails");
  r->add_option("--out", out_dir, "Output directory");

  auto* p = app.add_subcommand("plotdata", "Long-format figure series from a trace directory");
  p->add_option("trace_dir", trace_dir, "Directory written by run")->required();
  p->add_option("--out", out_dir, "Output directory (default: trace_dir)");

  auto* q = app.add_subcommand("oracle", "Centralized optimum, grid search and parameter estimates");
  q->add_option("scenario", scenario, "Scenario file or builtin:<name>")->required();
  q->add_option("--resolution", resolution, "Grid spacing")->check(CLI::PositiveNumber);
  q->add_option("--samples", samples, "Grid points for the mu/beta estimates")->check(CLI::Range(10, 1000000));
  q->add_option("--out", out_file, "Write JSON here instead of stdout");

  auto* e = app.add_subcommand("export-scenario", "Write a built-in scenario as JSON");
  e->add_option("name", export_name, "Built-in scenario name");
  e->add_flag("--list", list, "List built-in names");
  e->add_option("--out", out_file, "Output file (default: stdout)");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (v->parsed()) return cmd_validate(scenario, out, err);
    if (r->parsed()) {
      if (!manifest.empty()) {
        if (!rs.scenario.empty() || o_cycles->count() || o_tol->count() || o_steps->count() || o_freeze->count())
          throw UsageError("--manifest cannot be combined with a scenario or run flags");
        rs = spec_from_manifest(manifest);
        if (out_dir.empty()) out_dir = fs::path(manifest).parent_path().string();
      } else {
        if (rs.scenario.empty()) throw UsageError("run: give a scenario or --manifest");
        if (o_cycles->count()) rs.cycles = cycles;
        if (o_tol->count()) rs.tol = tol;
        if (o_steps->count()) rs.steps = steps;
        if (o_freeze->count()) rs.freeze = freeze;
      }
      if (out_dir.empty()) throw UsageError("run: --out is required");
      return cmd_run(rs, out_dir, *log, out, err);
    }
    if (p->parsed()) return cmd_plotdata(trace_dir, out_dir.empty() ? trace_dir : out_dir, out, err);
    if (q->parsed()) return cmd_oracle(scenario, resolution, samples, out_file, out, err);
    if (e->parsed()) return cmd_export(export_name, list, out_file, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n";
    return kUsage;
  } catch (const ScenarioParseError& ex) {
    err << "error: " << ex.what() << "\n";
    return kUsage;
  } catch (const Failure& ex) {
    err << "error: " << ex.what() << "\n";
    return kDomainFailure;
  } catch (const RunError& ex) {
    err << "error at t=" << ex.t() << " k=" << ex.k() << " agent=" << ex.agent() << ": " << ex.what() << "\n";
    return kDomainFailure;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kDomainFailure;
  }
  return kUsage;
}

}  // namespace dmpc::cli
