#include "dmpc/scenario_io.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dmpc {

using nlohmann::json;

namespace {

const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object()) throw ScenarioParseError(where + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ScenarioParseError(where + ": missing field '" + key + "'");
  return *it;
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ScenarioParseError(where + ": expected a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ScenarioParseError(where + ": expected an integer");
  return j.get<int>();
}

std::string text(const json& j, const std::string& where) {
  if (!j.is_string()) throw ScenarioParseError(where + ": expected a string");
  return j.get<std::string>();
}

Vector vec(const json& j, const std::string& where) {
  if (!j.is_array()) throw ScenarioParseError(where + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = number(j[i], where + "[" + std::to_string(i) + "]");
  return v;
}

Matrix mat(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ScenarioParseError(where + ": expected a non-empty array of rows");
  const std::size_t rows = j.size();
  if (!j[0].is_array() || j[0].empty()) throw ScenarioParseError(where + ": rows must be non-empty arrays");
  const std::size_t cols = j[0].size();
  Matrix M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::string w = where + "[" + std::to_string(r) + "]";
    if (!j[r].is_array() || j[r].size() != cols) throw ScenarioParseError(w + ": ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) M(r, c) = number(j[r][c], w);
  }
  return M;
}

Polyhedron polyhedron(const json& j, const std::string& where) {
  if (!j.is_object()) throw ScenarioParseError(where + ": expected an object");
  const bool is_box = j.contains("lo") || j.contains("hi");
  const bool is_poly = j.contains("H") || j.contains("h");
  if (is_box == is_poly) throw ScenarioParseError(where + ": give either {lo, hi} or {H, h}");
  Polyhedron P;
  if (is_box) {
    const Vector lo = vec(field(j, "lo", where), where + ".lo");
    const Vector hi = vec(field(j, "hi", where), where + ".hi");
    if (lo.size() != hi.size() || lo.size() == 0) throw ScenarioParseError(where + ": lo/hi size mismatch");
    if ((lo.array() > hi.array()).any()) throw ScenarioParseError(where + ": lo > hi");
    P = Polyhedron::box(lo, hi);
  } else {
    P.H = mat(field(j, "H", where), where + ".H");
    P.h = vec(field(j, "h", where), where + ".h");
  }
  try {
    P.validate();
  } catch (const ConfigError& e) {
    throw ScenarioParseError(where + ": " + e.what());
  }
  return P;
}

// Box rows come in (+e_i <= hi_i, -e_i <= -lo_i) pairs; write them back in
// the compact form when they do.
json polyhedron_json(const Polyhedron& P) {
  const Eigen::Index d = P.dim();
  bool is_box = P.H.rows() == 2 * d;
  for (Eigen::Index i = 0; is_box && i < d; ++i) {
    Vector up = Vector::Zero(d), dn = Vector::Zero(d);
    up(i) = 1.0;
    dn(i) = -1.0;
    is_box = P.H.row(2 * i).transpose() == up && P.H.row(2 * i + 1).transpose() == dn;
  }
  json j;
  if (is_box) {
    std::vector<double> lo, hi;
    for (Eigen::Index i = 0; i < d; ++i) {
      hi.push_back(P.h(2 * i));
      lo.push_back(-P.h(2 * i + 1));
    }
    j["lo"] = lo;
    j["hi"] = hi;
    return j;
  }
  json H = json::array();
  for (Eigen::Index r = 0; r < P.H.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < P.H.cols(); ++c) row.push_back(P.H(r, c));
    H.push_back(row);
  }
  j["H"] = H;
  j["h"] = std::vector<double>(P.h.data(), P.h.data() + P.h.size());
  return j;
}

json mat_json(const Matrix& M) {
  json a = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    a.push_back(row);
  }
  return a;
}

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  return true;
}

}  // namespace

ScenarioConfig scenario_from_json(const std::string& src) {
  json j;
  try {
    j = json::parse(src);
  } catch (const json::parse_error& e) {
    throw ScenarioParseError(std::string("invalid JSON: ") + e.what());
  }
  const std::string top = "scenario";
  ScenarioConfig sc;
  sc.name = text(field(j, "name", top), "name");
  if (j.contains("description")) sc.description = text(j["description"], "description");
  sc.horizon = integer(field(j, "horizon", top), "horizon");
  sc.dt = number(field(j, "dt", top), "dt");
  sc.steps = integer(field(j, "steps", top), "steps");
  sc.cycle_budget = integer(field(j, "cycle_budget", top), "cycle_budget");
  sc.converged_tol = number(field(j, "converged_tol", top), "converged_tol");
  if (j.contains("freeze_theta_below") && !j["freeze_theta_below"].is_null())
    sc.freeze_theta_below = number(j["freeze_theta_below"], "freeze_theta_below");

  const json& box = field(j, "theta_box", top);
  sc.theta_box.lo = vec(field(box, "lo", "theta_box"), "theta_box.lo");
  sc.theta_box.hi = vec(field(box, "hi", "theta_box"), "theta_box.hi");

  const json& neg = field(j, "negotiation", top);
  sc.params.mu = number(field(neg, "mu", "negotiation"), "negotiation.mu");
  sc.params.beta = number(field(neg, "beta", "negotiation"), "negotiation.beta");
  sc.params.eps = number(field(neg, "eps", "negotiation"), "negotiation.eps");
  sc.params.max_cycles = integer(field(neg, "max_cycles", "negotiation"), "negotiation.max_cycles");
  sc.params.theta0 = vec(field(neg, "theta0", "negotiation"), "negotiation.theta0");

  const json& agents = field(j, "agents", top);
  if (!agents.is_array() || agents.empty()) throw ScenarioParseError("agents: expected a non-empty array");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const json& a = agents[i];
    const std::string w = "agents[" + std::to_string(i) + "]";
    LinearAgent ag;
    ag.name = text(field(a, "name", w), w + ".name");
    if (!valid_name(ag.name))
      throw ScenarioParseError(w + ".name: use letters, digits, '_' or '-' only");
    ag.A = mat(field(a, "A", w), w + ".A");
    ag.B = mat(field(a, "B", w), w + ".B");
    ag.C = mat(field(a, "C", w), w + ".C");
    ag.Q = mat(field(a, "Q", w), w + ".Q");
    ag.R = mat(field(a, "R", w), w + ".R");
    ag.X = polyhedron(field(a, "X", w), w + ".X");
    ag.U = polyhedron(field(a, "U", w), w + ".U");
    sc.agents.push_back(std::move(ag));
    sc.initial_states.push_back(vec(field(a, "x0", w), w + ".x0"));
  }
  try {
    sc.validate_structure();
  } catch (const ConfigError& e) {
    throw ScenarioParseError(e.what());
  }
  return sc;
}

std::string scenario_to_json(const ScenarioConfig& sc) {
  json j;
  j["name"] = sc.name;
  j["description"] = sc.description;
  j["units"] = "states, inputs and outputs in the units of the agent models; dt in seconds";
  j["horizon"] = sc.horizon;
  j["dt"] = sc.dt;
  j["steps"] = sc.steps;
  j["cycle_budget"] = sc.cycle_budget;
  j["converged_tol"] = sc.converged_tol;
  j["freeze_theta_below"] = sc.freeze_theta_below ? json(*sc.freeze_theta_below) : json(nullptr);
  j["theta_box"] = {{"lo", vec_json(sc.theta_box.lo)}, {"hi", vec_json(sc.theta_box.hi)}};
  j["negotiation"] = {{"mu", sc.params.mu},
                      {"beta", sc.params.beta},
                      {"eps", sc.params.eps},
                      {"max_cycles", sc.params.max_cycles},
                      {"theta0", vec_json(sc.params.theta0)}};
  json agents = json::array();
  for (std::size_t i = 0; i < sc.agents.size(); ++i) {
    const LinearAgent& a = sc.agents[i];
    json ja;
    ja["name"] = a.name;
    ja["A"] = mat_json(a.A);
    ja["B"] = mat_json(a.B);
    ja["C"] = mat_json(a.C);
    ja["Q"] = mat_json(a.Q);
    ja["R"] = mat_json(a.R);
    ja["X"] = polyhedron_json(a.X);
    ja["U"] = polyhedron_json(a.U);
    ja["x0"] = vec_json(sc.initial_states[i]);
    agents.push_back(ja);
  }
  j["agents"] = agents;
  return j.dump(2) + "\n";
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioParseError("cannot read scenario file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return scenario_from_json(ss.str());
}

void save_scenario(const ScenarioConfig& sc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << scenario_to_json(sc);
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace dmpc
