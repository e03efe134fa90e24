#include "dmpc/trace_io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace dmpc {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

class Row {
 public:
  Row& add(const std::string& s) {
    if (!first_) line_ += ',';
    first_ = false;
    line_ += s;
    return *this;
  }
  Row& num(double v) { return add(format_number(v)); }
  Row& flag(bool b) { return add(b ? "1" : "0"); }
  Row& vec(const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) num(v(i));
    return *this;
  }
  Row& nans(Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) add("nan");
    return *this;
  }
  std::string str() const { return line_ + "\n"; }

 private:
  std::string line_;
  bool first_ = true;
};

void names(Row& r, const std::string& prefix, Eigen::Index n) {
  for (Eigen::Index j = 0; j < n; ++j) r.add(prefix + "_" + std::to_string(j));
}

json vec_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string closedloop_csv(const ClosedLoopLog& log, const ScenarioConfig& sc) {
  const Eigen::Index p = sc.theta_box.dim();
  std::string out;
  Row h;
  h.add("t");
  for (const auto& a : sc.agents) {
    names(h, "x_" + a.name, a.n());
    names(h, "u_" + a.name, a.m());
    names(h, "y_" + a.name, a.p());
    names(h, "theta_" + a.name, p);
    names(h, "plan_theta_" + a.name, p);
    h.add("J_curr_" + a.name).add("J_prev_" + a.name);
  }
  for (const char* c : {"f_dmpc", "f_sg", "implemented", "held", "frozen", "cycles", "implemented_cost", "beta",
                        "theta_change"})
    h.add(c);
  names(h, "theta_star", p);
  h.add("Jstar");
  for (const auto& a : sc.agents) h.add("mismatch_" + a.name);
  h.add("max_mismatch").add("impl_mismatch_max");
  out += h.str();

  for (const StepRecord& s : log.steps) {
    Row r;
    r.add(std::to_string(s.t));
    for (std::size_t i = 0; i < sc.agents.size(); ++i) {
      r.vec(s.x[i]).vec(s.u[i]).vec(s.y[i]).vec(s.subiterate[i]);
      if (s.plan_theta[i].size() == p)
        r.vec(s.plan_theta[i]);
      else
        r.nans(p);
      r.num(s.J_curr(i)).num(s.J_prev(i));
    }
    r.flag(s.f_dmpc).flag(s.f_sg).flag(s.implemented).flag(s.held).flag(s.frozen);
    r.add(std::to_string(s.cycles)).num(s.implemented_cost).num(s.beta).num(s.theta_change);
    if (s.theta_star) {
      r.vec(*s.theta_star).num(s.Jstar.value_or(kNaN));
      double impl = 0.0;
      for (std::size_t i = 0; i < sc.agents.size(); ++i) {
        r.num(s.mismatch[i]);
        impl = std::max(impl, (s.plan_theta[i] - *s.theta_star).norm());
      }
      r.num(s.max_mismatch).num(impl);
    } else {
      r.nans(p + 1 + static_cast<Eigen::Index>(sc.agents.size()) + 2);
    }
    out += r.str();
  }
  return out;
}

std::string negotiation_csv(const ClosedLoopLog& log, const ScenarioConfig& sc) {
  std::string out;
  Row h;
  h.add("t").add("k").add("agent");
  names(h, "theta", sc.theta_box.dim());
  h.add("g_norm").add("alpha").add("bound").add("q");
  out += h.str();
  for (const SubiterationRow& s : log.negotiation) {
    Row r;
    r.add(std::to_string(s.t)).add(std::to_string(s.k)).add(sc.agents[s.agent].name);
    r.vec(s.theta).num(s.g_norm).num(s.alpha).num(s.bound).num(s.q);
    out += r.str();
  }
  return out;
}

std::string centralized_csv(const CentralizedSolution& cs, std::span<const LocalProblem> problems,
                            std::span<const Vector> states) {
  const int T = problems.front().horizon();
  std::vector<Matrix> X;
  for (std::size_t i = 0; i < problems.size(); ++i) X.push_back(problems[i].predict(states[i], cs.Ustar[i]));
  std::string out;
  Row h;
  h.add("k");
  for (const auto& pr : problems) {
    const LinearAgent& a = pr.agent();
    names(h, "x_" + a.name, a.n());
    names(h, "u_" + a.name, a.m());
    names(h, "y_" + a.name, a.p());
  }
  names(h, "theta_star", cs.theta_star.size());
  h.add("Jstar");
  out += h.str();
  for (int k = 0; k <= T; ++k) {
    Row r;
    r.add(std::to_string(k));
    for (std::size_t i = 0; i < problems.size(); ++i) {
      const LinearAgent& a = problems[i].agent();
      r.vec(X[i].col(k));
      if (k < T)
        r.vec(cs.Ustar[i].col(k));
      else
        r.nans(a.m());
      r.vec(a.C * X[i].col(k));
    }
    r.vec(cs.theta_star).num(cs.Jstar);
    out += r.str();
  }
  return out;
}

std::string summary_json(const ClosedLoopLog& log, const ScenarioConfig& sc,
                         const std::optional<LyapunovReport>& lyap) {
  json j;
  j["scenario"] = sc.name;
  j["mode"] = log.mode;
  j["steps"] = log.steps.size();
  json agents = json::array();
  for (const auto& a : sc.agents) agents.push_back(a.name);
  j["agents"] = agents;
  j["parameters"] = {{"mu", log.params.mu},
                     {"beta_initial", sc.params.beta},
                     {"beta_final", log.params.beta},
                     {"eps", log.params.eps},
                     {"max_cycles", log.params.max_cycles},
                     {"cycle_budget", sc.cycle_budget},
                     {"converged_tol", sc.converged_tol}};
  int implemented = 0, held = 0, frozen = 0;
  for (const auto& s : log.steps) {
    implemented += s.implemented;
    held += s.held;
    frozen += s.frozen;
  }
  j["implemented_steps"] = implemented;
  j["held_steps"] = held;
  j["frozen_steps"] = frozen;

  json fin;
  double spread = 0.0;
  std::vector<Vector> ys;
  for (std::size_t i = 0; i < sc.agents.size(); ++i) {
    ys.push_back(sc.agents[i].C * log.final_states[i]);
    fin["outputs"][sc.agents[i].name] = vec_json(ys.back());
    fin["states"][sc.agents[i].name] = vec_json(log.final_states[i]);
  }
  for (std::size_t a = 0; a < ys.size(); ++a)
    for (std::size_t b = a + 1; b < ys.size(); ++b) spread = std::max(spread, (ys[a] - ys[b]).lpNorm<Eigen::Infinity>());
  fin["output_spread"] = spread;
  if (!log.steps.empty()) {
    for (std::size_t i = 0; i < sc.agents.size(); ++i) {
      fin["theta"][sc.agents[i].name] = vec_json(log.steps.back().subiterate[i]);
      fin["plan_theta"][sc.agents[i].name] = vec_json(log.steps.back().plan_theta[i]);
    }
    if (log.steps.back().theta_star) fin["theta_star"] = vec_json(*log.steps.back().theta_star);
  }
  j["final"] = fin;

  if (!log.steps.empty() && log.steps.front().theta_star) {
    json curve = json::array();
    for (const auto& s : log.steps) curve.push_back(s.max_mismatch);
    j["mismatch_curve"] = curve;
  }
  if (lyap) {
    j["lyapunov"] = {{"Jstar", lyap->Jstar},
                     {"max_increase", lyap->max_increase},
                     {"increase_tol", lyap->increase_tol},
                     {"min_margin", lyap->min_margin},
                     {"monotone", lyap->monotone},
                     {"decrease_ok", lyap->decrease_ok}};
  }
  j["warnings"] = log.warnings;
  j["token_deliveries"] = log.deliveries;
  return j.dump(2) + "\n";
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for '" + tmp + "'");
  }
  fs::rename(tmp, path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

double CsvTable::number(std::size_t row, const std::string& name) const {
  const int c = column(name);
  if (c < 0) throw std::runtime_error("csv: no column '" + name + "'");
  return std::stod(rows.at(row).at(static_cast<std::size_t>(c)));
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: empty file");
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto r = split(line);
    if (r.size() != t.header.size()) throw std::runtime_error("csv: ragged row");
    t.rows.push_back(std::move(r));
  }
  return t;
}

std::map<std::string, std::string> plot_data(const std::string& trace_dir) {
  const fs::path dir(trace_dir);
  for (const char* f : {"closedloop.csv", "negotiation.csv", "centralized.csv"})
    if (!fs::exists(dir / f)) throw std::runtime_error(std::string("missing trace file ") + (dir / f).string());
  const CsvTable cl = parse_csv(read_file((dir / "closedloop.csv").string()));
  const CsvTable ng = parse_csv(read_file((dir / "negotiation.csv").string()));
  const CsvTable ce = parse_csv(read_file((dir / "centralized.csv").string()));

  // agent names and output dimension from the y_<name>_<j> columns, in order
  std::vector<std::string> agents;
  std::map<std::string, int> out_dim;
  for (const auto& hname : ce.header) {
    if (hname.rfind("y_", 0) != 0) continue;
    const auto us = hname.rfind('_');
    const std::string a = hname.substr(2, us - 2);
    if (!out_dim.count(a)) agents.push_back(a);
    ++out_dim[a];
  }
  if (agents.empty()) throw std::runtime_error("centralized.csv has no output columns");
  int p = 0;
  while (ce.column("theta_star_" + std::to_string(p)) >= 0) ++p;

  std::map<std::string, std::string> out;
  {
    std::string s = "agent,k,component,value\n";
    for (std::size_t r = 0; r < ce.rows.size(); ++r)
      for (const auto& a : agents)
        for (int j = 0; j < out_dim[a]; ++j) {
          const std::string c = "y_" + a + "_" + std::to_string(j);
          s += a + "," + ce.rows[r][0] + "," + std::to_string(j) + "," + ce.rows[r][ce.column(c)] + "\n";
        }
    out["fig1.csv"] = s;
  }
  {
    std::string s = "agent,t,component,value\n";
    for (std::size_t r = 0; r < cl.rows.size(); ++r)
      for (const auto& a : agents)
        for (int j = 0; j < out_dim[a]; ++j) {
          const std::string c = "y_" + a + "_" + std::to_string(j);
          s += a + "," + cl.rows[r][0] + "," + std::to_string(j) + "," + cl.rows[r][cl.column(c)] + "\n";
        }
    out["fig2.csv"] = s;
  }
  {
    // theta(k+1) is the subiterate of the last agent in cycle k at t = 0
    std::string s = "k,series,component,value\n";
    const int ct = ng.column("t"), ck = ng.column("k"), ca = ng.column("agent");
    const std::string& last = agents.back();
    std::vector<std::string> star(static_cast<std::size_t>(p));
    for (int j = 0; j < p; ++j) {
      const std::string c = "theta_star_" + std::to_string(j);
      const std::string v = cl.rows.empty() ? "nan" : cl.rows[0][cl.column(c)];
      star[j] = v == "nan" ? ce.rows[0][ce.column(c)] : v;
    }
    for (const auto& row : ng.rows) {
      if (row[ct] != "0" || row[ca] != last) continue;
      for (int j = 0; j < p; ++j) {
        s += row[ck] + ",theta," + std::to_string(j) + "," + row[ng.column("theta_" + std::to_string(j))] + "\n";
        s += row[ck] + ",theta_star," + std::to_string(j) + "," + star[j] + "\n";
      }
    }
    out["fig3.csv"] = s;
  }
  {
    std::string s = "t,k,component,value\n";
    const int ct = ng.column("t"), ck = ng.column("k"), ca = ng.column("agent");
    const std::string& first = agents.front();
    for (const auto& row : ng.rows) {
      if (row[ca] != first) continue;
      for (int j = 0; j < p; ++j)
        s += row[ct] + "," + row[ck] + "," + std::to_string(j) + "," + row[ng.column("theta_" + std::to_string(j))] +
             "\n";
    }
    out["fig4.csv"] = s;
  }
  return out;
}

}  // namespace dmpc
