#include "dmpc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "dmpc/kernels.hpp"

namespace dmpc {

namespace {

struct GridLevel {
  std::vector<Vector> points;
  double spacing = 0.0;
};

GridLevel make_level(const BoxSet& box, double resolution, int cap) {
  int per_axis = 2;
  double spacing = 0.0;
  for (Eigen::Index j = 0; j < box.dim(); ++j) {
    const double w = box.hi(j) - box.lo(j);
    if (w <= 0.0) continue;
    per_axis = std::max(per_axis, static_cast<int>(std::ceil(w / resolution - 1e-9)) + 1);
  }
  per_axis = std::min(per_axis, cap);
  for (Eigen::Index j = 0; j < box.dim(); ++j) spacing = std::max(spacing, (box.hi(j) - box.lo(j)) / (per_axis - 1));
  return {box_grid(box, per_axis), spacing};
}

std::string fmt_theta(const Vector& v) {
  std::string s = "(";
  char buf[32];
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6g", v(i));
    s += (i ? ", " : "") + std::string(buf);
  }
  return s + ")";
}

GridSearchResult grid_search_impl(std::span<const LocalProblem> agents, std::span<const Vector> states,
                                  const BoxSet& box, double resolution, bool parallel, const QpOptions& opts,
                                  int cap) {
  if (agents.empty()) throw ConfigError("grid_search_theta: no agents");
  box.validate();
  if (box.dim() > 2) throw ConfigError("grid_search_theta: only p <= 2 is supported");
  if (!(resolution > 0.0)) throw ConfigError("grid_search_theta: resolution must be positive");

  GridSearchResult res;
  res.value = std::numeric_limits<double>::infinity();
  std::vector<std::pair<Vector, double>> seen;
  BoxSet cur = box;
  for (;;) {
    const GridLevel level = make_level(cur, resolution, cap);
    const auto evals = parallel ? kernels::evaluate_points_parallel(agents, states, level.points, opts)
                                : kernels::evaluate_points_serial(agents, states, level.points, opts);
    Vector best_here;
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < level.points.size(); ++j) {
      ++res.evaluated;
      if (!evals[j].feasible) {
        ++res.skipped;
        if (res.skipped_log.size() < 50) res.skipped_log.push_back("infeasible at " + fmt_theta(level.points[j]));
        continue;
      }
      seen.emplace_back(level.points[j], evals[j].total_cost);
      // strict < keeps the first point on exact ties
      if (evals[j].total_cost < best_val) {
        best_val = evals[j].total_cost;
        best_here = level.points[j];
      }
    }
    if (best_here.size() == 0) break;
    if (best_val < res.value) {
      res.value = best_val;
      res.theta_best = best_here;
    }
    res.resolution = level.spacing;
    if (level.spacing <= resolution * (1.0 + 1e-9)) break;
    // convexity: the minimizer lies within one spacing of the best point;
    // two gives slack for the 2-D case
    cur.lo = (res.theta_best.array() - 2.0 * level.spacing).max(box.lo.array()).matrix();
    cur.hi = (res.theta_best.array() + 2.0 * level.spacing).min(box.hi.array()).matrix();
  }
  if (res.theta_best.size() == 0) throw ConfigError("grid_search_theta: every grid point is infeasible");
  const double tie_tol = 1e-9 * (1.0 + std::abs(res.value));
  for (const auto& [th, v] : seen)
    if (v <= res.value + tie_tol && (th - res.theta_best).norm() > res.resolution * (1.0 + 1e-9))
      res.ties.push_back(th);
  return res;
}

LinearAgent double_integrator(const std::string& name) {
  LinearAgent a;
  a.name = name;
  a.A = make_matrix({{1, 1}, {0, 1}});
  a.B = make_matrix({{0}, {1}});
  a.C = make_matrix({{1, 0}});
  a.Q = Matrix::Identity(2, 2);
  a.R = Matrix::Identity(1, 1);
  a.X = Polyhedron::box(make_vector({-20, -5}), make_vector({20, 5}));
  a.U = Polyhedron::box(make_vector({-5}), make_vector({5}));
  return a;
}

// Stand-in longitudinal model, forward Euler at dt:
//   dh/dt = c_climb u2
//   dV/dt = -V / tau + c_thrust u1 - c_bleed u2
// u1: throttle deviation [lb], u2: elevator [deg] or pitch rate command [deg/s].
LinearAgent aircraft(const std::string& name, double dt, double tau, double c_thrust, double c_climb,
                     double c_bleed) {
  LinearAgent a;
  a.name = name;
  a.A = make_matrix({{1, 0}, {0, 1 - dt / tau}});
  a.B = make_matrix({{0, dt * c_climb}, {dt * c_thrust, -dt * c_bleed}});
  a.C = Matrix::Identity(2, 2);
  a.X = Polyhedron::box(make_vector({-100, -20}), make_vector({100, 20}));
  return a;
}

constexpr double kDt = 0.05;

LinearAgent b747() {
  LinearAgent a = aircraft("B747", kDt, 40.0, 1.5e-5, 300.0, 0.05);
  a.Q = make_matrix({{1, 0}, {0, 1}});
  a.R = make_matrix({{1e-7, 0}, {0, 1e4}});
  a.U = Polyhedron::box(make_vector({-50000, -10}), make_vector({150000, 10}));
  return a;
}

LinearAgent f16(const std::string& name, const Matrix& Q, const Matrix& R) {
  LinearAgent a = aircraft(name, kDt, 20.0, 6e-4, 1.5, 0.005);
  a.Q = Q;
  a.R = R;
  a.U = Polyhedron::box(make_vector({-1000, -100}), make_vector({5000, 100}));
  return a;
}

ScenarioConfig refueling_base() {
  ScenarioConfig sc;
  sc.theta_box = BoxSet{make_vector({-35, -2}), make_vector({35, 2})};
  sc.horizon = 100;
  sc.dt = kDt;
  sc.steps = 100;
  sc.cycle_budget = 15;
  sc.converged_tol = 1e-6;
  sc.initial_states = {make_vector({-10, 0}), make_vector({30.48, 0}), make_vector({-30.48, 0})};
  sc.params.theta0 = Vector::Zero(2);
  sc.params.max_cycles = 20000;
  return sc;
}

}  // namespace

GridSearchResult grid_search_theta(std::span<const LocalProblem> agents, std::span<const Vector> states,
                                   const BoxSet& box, double resolution, bool parallel, const QpOptions& opts) {
  // 1-D grids are cheap enough to take in one level more often than not
  const int cap = box.dim() == 1 ? 4001 : 41;
  return grid_search_impl(agents, states, box, resolution, parallel, opts, cap);
}

GridSearchResult grid_search_theta_exhaustive(std::span<const LocalProblem> agents,
                                              std::span<const Vector> states, const BoxSet& box,
                                              double resolution, bool parallel, const QpOptions& opts) {
  return grid_search_impl(agents, states, box, resolution, parallel, opts, std::numeric_limits<int>::max());
}

LyapunovReport lyapunov_report(const ClosedLoopLog& log, std::span<const LocalProblem> agents, const BoxSet& box,
                               bool parallel, const QpOptions& opts) {
  LyapunovReport r;
  const std::size_t S = log.steps.size();
  std::vector<std::vector<Vector>> sets;
  sets.reserve(S + 1);
  for (const auto& s : log.steps) sets.push_back(s.x);
  sets.push_back(log.final_states);

  // theta* is needed for stage_opt; solve once per state, values and argmins
  std::vector<CentralizedSolution> sols(sets.size());
  std::vector<char> ok(sets.size(), 0);
  auto one = [&](std::size_t j) {
    try {
      sols[j] = solve_centralized(agents, sets[j], box, opts);
      ok[j] = 1;
    } catch (const CentralizedInfeasibleError&) {
    }
  };
  if (parallel) {
    const auto n = static_cast<std::int64_t>(sets.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t j = 0; j < n; ++j) one(static_cast<std::size_t>(j));
  } else {
    for (std::size_t j = 0; j < sets.size(); ++j) one(j);
  }
  for (std::size_t j = 0; j < sets.size(); ++j) {
    if (!ok[j]) throw CentralizedInfeasibleError(QpStatus::Infeasible);
    r.Jstar.push_back(sols[j].Jstar);
    r.theta_star.push_back(sols[j].theta_star);
  }
  r.increase_tol = 1e-6 * (1.0 + (r.Jstar.empty() ? 0.0 : r.Jstar.front()));
  r.max_increase = -std::numeric_limits<double>::infinity();
  r.min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < S; ++t) {
    const StepRecord& st = log.steps[t];
    double impl = 0.0, opt = 0.0;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const LocalProblem& a = agents[i];
      impl += stage_cost(a.agent(), st.x[i], st.u[i], st.plan_theta[i], a.emap());
      opt += stage_cost(a.agent(), st.x[i], st.u[i], r.theta_star[t], a.emap());
    }
    const double inc = r.Jstar[t + 1] - r.Jstar[t];
    r.increase.push_back(inc);
    r.stage_impl.push_back(impl);
    r.stage_opt.push_back(opt);
    r.margin.push_back(-inc - impl);
    r.max_increase = std::max(r.max_increase, inc);
    r.min_margin = std::min(r.min_margin, -inc - impl);
    if (inc > r.increase_tol) r.monotone = false;
    if (-inc - impl < -1e-6) r.decrease_ok = false;
  }
  if (S == 0) {
    r.max_increase = 0.0;
    r.min_margin = 0.0;
  }
  return r;
}

ScenarioConfig build_reference_scenario() {
  ScenarioConfig sc;
  sc.name = "reference";
  sc.description =
      "Three double integrators (position, velocity) on a line starting at rest at positions -1, 0 and 2, "
      "equal weights Q = I, R = 1, |u| <= 5, |position| <= 20, |velocity| <= 5. Consensus on position.";
  sc.agents = {double_integrator("left"), double_integrator("middle"), double_integrator("right")};
  sc.initial_states = {make_vector({-1, 0}), make_vector({0, 0}), make_vector({2, 0})};
  sc.theta_box = BoxSet{make_vector({-10}), make_vector({10})};
  sc.horizon = 10;
  sc.dt = 1.0;
  sc.steps = 100;
  sc.cycle_budget = 15;
  sc.converged_tol = 1e-8;
  sc.params.theta0 = make_vector({0});
  sc.params.max_cycles = 20000;
  calibrate_parameters(sc);
  return sc;
}

ScenarioConfig build_refueling_scenario() {
  ScenarioConfig sc = refueling_base();
  sc.name = "refueling";
  sc.description =
      "Tanker (B747) and two fighters (F16-1, F16-2). State (altitude, airspeed) deviation from trim in m and "
      "m/s; inputs (throttle [lb], elevator [deg]) for the tanker and (throttle [lb], pitch rate command "
      "[deg/s]) for the fighters. Stand-in dynamics, forward Euler at dt = 0.05 s: dh/dt = c_climb u2, "
      "dV/dt = -V/tau + c_thrust u1 - c_bleed u2. B747: tau 40 s, c_thrust 1.5e-5, c_climb 300, c_bleed 0.05. "
      "F16: tau 20 s, c_thrust 6e-4, c_climb 1.5, c_bleed 0.005.";
  sc.agents = {b747(), f16("F16-1", make_matrix({{10, 0}, {0, 10}}), make_matrix({{1e-5, 0}, {0, 0.5}})),
               f16("F16-2", make_matrix({{0.4, 0}, {0, 10}}), make_matrix({{1e-5, 0}, {0, 0.1}}))};
  calibrate_parameters(sc, 25);
  return sc;
}

ScenarioConfig build_refueling_equalized_scenario() {
  ScenarioConfig sc = refueling_base();
  sc.name = "refueling-equalized";
  sc.description =
      "Refueling initial conditions with three identical aircraft: F16 stand-in dynamics, Q = I, "
      "R = diag(1e-5, 0.5) and the F16 input bounds for everyone.";
  const Matrix Q = make_matrix({{1, 0}, {0, 1}});
  const Matrix R = make_matrix({{1e-5, 0}, {0, 0.5}});
  sc.agents = {f16("A", Q, R), f16("B", Q, R), f16("C", Q, R)};
  calibrate_parameters(sc, 25);
  return sc;
}

void calibrate_parameters(ScenarioConfig& sc, int samples, const QpOptions& opts) {
  const std::vector<LocalProblem> problems = sc.make_problems();
  const ParameterEstimate est = estimate_parameters(problems, sc.initial_states, sc.theta_box, samples, opts);
  sc.params.beta = est.beta_hat;
  sc.params.mu = est.mu_hat;
  // accuracy test passes at cycle k_pass of every sampling instant up to the last
  const int k_pass = std::max(0, std::min(sc.cycle_budget - 1, (2 * sc.cycle_budget) / 3));
  sc.params.eps =
      sc.steps * convergence_bound(k_pass, sc.size(), sc.params.beta, sc.params.mu) * (1.0 + 1e-9);
}

std::vector<std::string> builtin_scenario_names() { return {"reference", "refueling", "refueling-equalized"}; }

ScenarioConfig builtin_scenario(const std::string& name) {
  if (name == "reference") return build_reference_scenario();
  if (name == "refueling") return build_refueling_scenario();
  if (name == "refueling-equalized") return build_refueling_equalized_scenario();
  throw ConfigError("unknown built-in scenario '" + name + "'");
}

}  // namespace dmpc
