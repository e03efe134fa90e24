#include "dmpc/ring.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "dmpc/centralized.hpp"

namespace dmpc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt_vec(const Vector& v) {
  std::string s = "[";
  char buf[32];
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v(i));
    s += (i ? "," : "") + std::string(buf);
  }
  return s + "]";
}

Vector input_from_plan(const AgentNode& node, const EquilibriumMap& emap) {
  // past the horizon the plan has reached x_e(theta); stay there
  if (node.plan_offset < node.plan.cols()) return node.plan.col(node.plan_offset);
  return emap.u_e(node.plan_theta);
}

}  // namespace

RingChannel::RingChannel(int n, bool keep_log) : keep_log_(keep_log) {
  if (n < 1) throw ConfigError("ring: need at least one node");
  order_.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order_[static_cast<std::size_t>(i)] = i;
}

void RingChannel::deliver(const Token& token, int t, int from_pos, const std::string& what) {
  ++deliveries_;
  if (!keep_log_) return;
  char buf[160];
  std::snprintf(buf, sizeof buf, "t=%d k=%d from=%d to=%d %s f_dmpc=%d f_sg=%d theta=", t, token.k,
                order_[static_cast<std::size_t>(from_pos)], order_[static_cast<std::size_t>(next(from_pos))],
                what.c_str(), int(token.f_dmpc), int(token.f_sg));
  log_.push_back(buf + fmt_vec(token.theta_sub) + " J_curr=" + fmt_vec(token.J_curr) +
                 " J_prev=" + fmt_vec(token.J_prev));
}

RunError::RunError(const std::string& what, int t, int k, int agent)
    : std::runtime_error("t=" + std::to_string(t) + " k=" + std::to_string(k) + " agent=" + std::to_string(agent) +
                         ": " + what),
      t_(t),
      k_(k),
      agent_(agent) {}

bool improvement_test(const Vector& J_curr, const Vector& J_prev) {
  if (J_curr.size() != J_prev.size()) throw ConfigError("improvement_test: length mismatch");
  return (J_curr - J_prev).sum() <= 0.0;
}

bool sg_accuracy_test(int k, int t, const NegotiationParams& params, int N) {
  if (t < 0) throw ConfigError("sg_accuracy_test: t must be >= 0");
  return convergence_bound(k, N, params.beta, params.mu) <= params.eps / (t + 1.0);
}

void closed_loop_step(std::vector<AgentNode>& nodes, const std::vector<LinearAgent>& agents,
                      const std::vector<Vector>& inputs, int t, double tol) {
  if (nodes.size() != agents.size() || inputs.size() != agents.size())
    throw ConfigError("closed_loop_step: one node and input per agent required");
  std::vector<Vector> next(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const LinearAgent& a = agents[i];
    if (inputs[i].size() != a.m()) throw ConfigError("closed_loop_step: input dimension mismatch");
    if (!a.U.contains(inputs[i], tol))
      throw InvariantBreach("input outside U (margin " + std::to_string(a.U.margin(inputs[i])) + ")", t, -1,
                            static_cast<int>(i));
    next[i] = a.A * nodes[i].state + a.B * inputs[i];
    if (!a.X.contains(next[i], tol))
      throw InvariantBreach("successor state outside X (margin " + std::to_string(a.X.margin(next[i])) + ")", t,
                            -1, static_cast<int>(i));
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i].state = std::move(next[i]);
}

namespace {

class Runner {
 public:
  Runner(const ScenarioConfig& sc, const RunMode& mode, const RunOptions& opts)
      : sc_(sc), mode_(mode), opts_(opts), problems_(sc.make_problems()), N_(sc.size()),
        ring_(N_, opts.record_events) {
    params_ = sc.params;
    freeze_ = opts.freeze_theta_below ? opts.freeze_theta_below : sc.freeze_theta_below;
    nodes_.resize(static_cast<std::size_t>(N_));
    for (int i = 0; i < N_; ++i) {
      nodes_[i].id = i;
      nodes_[i].state = sc.initial_states[i];
      nodes_[i].last_theta = sc.params.theta0;
    }
    tok_.theta_sub = sc.params.theta0;
    tok_.J_curr = Vector::Zero(N_);
    tok_.J_prev = Vector::Constant(N_, kJPrevInit);
    log_.mode = mode.name();
    log_.N = N_;
  }

  ClosedLoopLog run() {
    const int steps = opts_.steps >= 0 ? opts_.steps : sc_.steps;
    for (int t = 0; t < steps; ++t) step(t);
    for (const auto& n : nodes_) log_.final_states.push_back(n.state);
    log_.params = params_;
    log_.events = ring_.take_log();
    log_.deliveries = ring_.deliveries();
    return std::move(log_);
  }

 private:
  std::vector<Vector> states() const {
    std::vector<Vector> s;
    for (const auto& n : nodes_) s.push_back(n.state);
    return s;
  }

  LocalMpcSolution solve(int i, const Vector& theta, int t, int k) const {
    try {
      return problems_[i].solve(nodes_[i].state, theta, opts_.qp);
    } catch (const LocalInfeasibleError& e) {
      throw RunError(e.what(), t, k, i);
    }
  }

  // beta inflation; returns true when the bound was violated
  bool check_beta(double gnorm, int t, int k, int i) {
    if (gnorm <= params_.beta) return false;
    char buf[200];
    std::snprintf(buf, sizeof buf, "t=%d k=%d agent=%d: ||g|| = %.6g exceeds beta = %.6g; inflating", t, k, i,
                  gnorm, params_.beta);
    log_.warnings.emplace_back(buf);
    while (params_.beta < gnorm) params_.beta *= 1.5;
    return true;
  }

  bool keep_row(int t, int k, bool last) const {
    if (mode_.kind == RunMode::Kind::Interrupted || !opts_.thin_converged_log || t == 0) return true;
    return k < opts_.thin_keep || last;
  }

  void take_plan(int i, const LocalMpcSolution& s, const Vector& theta, std::vector<Vector>& inputs) {
    AgentNode& n = nodes_[i];
    n.plan = s.Useq;
    n.plan_offset = 0;
    n.plan_theta = theta;
    inputs[i] = n.plan.col(0);
  }

  void step(int t) {
    StepRecord rec;
    rec.t = t;
    rec.x = states();
    for (int i = 0; i < N_; ++i) rec.y.push_back(sc_.agents[i].C * nodes_[i].state);
    if (opts_.compute_oracle) {
      try {
        const CentralizedSolution cs = solve_centralized(problems_, rec.x, sc_.theta_box, opts_.qp);
        rec.theta_star = cs.theta_star;
        rec.Jstar = cs.Jstar;
      } catch (const CentralizedInfeasibleError& e) {
        throw RunError(std::string("centralized oracle: ") + e.what(), t, -1, -1);
      }
    }

    if (!frozen_ && freeze_ && params_.eps / (t + 1.0) < *freeze_) {
      frozen_ = true;
      theta_frozen_ = tok_.theta_sub;
      log_.warnings.push_back("t=" + std::to_string(t) + ": theta frozen at " + fmt_vec(theta_frozen_) +
                              "; continuing as decentralized MPC");
    }

    std::vector<Vector> inputs(static_cast<std::size_t>(N_));
    if (frozen_) {
      run_frozen(t, rec, inputs);
    } else if (mode_.kind == RunMode::Kind::FullyConverged) {
      run_converged(t, rec, inputs);
    } else {
      run_interrupted(t, rec, inputs);
    }

    rec.u = inputs;
    rec.J_curr = tok_.J_curr;
    rec.J_prev = tok_.J_prev;
    rec.beta = params_.beta;
    for (int i = 0; i < N_; ++i) {
      rec.subiterate.push_back(nodes_[i].last_theta);
      rec.plan_theta.push_back(nodes_[i].plan_theta);
    }
    if (rec.theta_star) {
      for (int i = 0; i < N_; ++i) {
        rec.mismatch.push_back((nodes_[i].last_theta - *rec.theta_star).norm());
        rec.max_mismatch = std::max(rec.max_mismatch, rec.mismatch.back());
      }
    } else {
      rec.max_mismatch = kNaN;
    }

    closed_loop_step(nodes_, sc_.agents, inputs, t);
    for (auto& n : nodes_) ++n.plan_offset;
    log_.steps.push_back(std::move(rec));
  }

  void run_frozen(int t, StepRecord& rec, std::vector<Vector>& inputs) {
    rec.frozen = true;
    for (int i = 0; i < N_; ++i) {
      const LocalMpcSolution s = solve(i, theta_frozen_, t, -1);
      tok_.J_curr(i) = s.qvalue;
      nodes_[i].last_theta = theta_frozen_;
      take_plan(i, s, theta_frozen_, inputs);
      nodes_[i].last_solution = s;
    }
    tok_.J_prev = tok_.J_curr;
    rec.implemented = true;
    rec.implemented_cost = tok_.J_curr.sum();
  }

  void run_converged(int t, StepRecord& rec, std::vector<Vector>& inputs) {
    Vector theta = tok_.theta_sub;
    int k = 0;
    double change = std::numeric_limits<double>::infinity();
    std::vector<SubiterationRow> pending;
    while (change > mode_.tol && k < params_.max_cycles) {
      CycleTrace tr;
      try {
        tr = subgradient_cycle(problems_, rec.x, theta, k, params_, sc_.theta_box, opts_.qp);
      } catch (const LocalInfeasibleError& e) {
        throw RunError(e.what(), t, k, -1);
      }
      bool violated = false;
      for (const auto& si : tr.subiterates) violated |= check_beta(si.g.norm(), t, k, si.agent);
      change = (tr.theta_after - theta).norm();
      theta = tr.theta_after;
      const bool last = change <= mode_.tol || k + 1 >= params_.max_cycles;
      if (keep_row(t, k, last)) {
        const double bound = convergence_bound(k, N_, params_.beta, params_.mu);
        for (const auto& si : tr.subiterates)
          log_.negotiation.push_back({t, k, si.agent, si.theta, si.g.norm(), tr.alpha, bound, si.q});
      }
      tok_.k = k;
      tok_.theta_sub = theta;
      tok_.f_sg = !violated && sg_accuracy_test(k, t, params_, N_);
      for (int pos = 0; pos < N_; ++pos) ring_.deliver(tok_, t, pos, "subiterate");
      ++k;
    }
    if (change > mode_.tol) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "t=%d: negotiation stopped at max_cycles=%d with change %.3g > tol %.3g", t,
                    params_.max_cycles, change, mode_.tol);
      log_.warnings.emplace_back(buf);
    }
    for (int i = 0; i < N_; ++i) {
      const LocalMpcSolution s = solve(i, theta, t, k);
      tok_.J_curr(i) = s.qvalue;
      nodes_[i].last_theta = theta;
      take_plan(i, s, theta, inputs);
      nodes_[i].last_solution = s;
    }
    tok_.f_dmpc = improvement_test(tok_.J_curr, tok_.J_prev);
    tok_.J_prev = tok_.J_curr;
    rec.f_dmpc = tok_.f_dmpc;
    rec.f_sg = tok_.f_sg;
    rec.implemented = true;
    rec.implemented_cost = tok_.J_curr.sum();
    rec.cycles = k;
    rec.theta_change = change;
  }

  void run_interrupted(int t, StepRecord& rec, std::vector<Vector>& inputs) {
    // a new sampling instant tightens eps/(t+1); both tests are redone
    tok_.f_dmpc = false;
    tok_.f_sg = false;
    tok_.k = 0;
    std::vector<bool> done(static_cast<std::size_t>(N_), false);
    int implemented = 0;
    int cycles = 0;
    bool extended = false;
    rec.implemented_cost = kNaN;

    while (implemented < N_) {
      // the implementation pass itself needs no solves, so it may follow the
      // last budgeted cycle
      if (cycles >= mode_.cycle_budget && !(tok_.f_dmpc && tok_.f_sg)) {
        bool all_have_plan = true;
        for (int i = 0; i < N_; ++i) all_have_plan &= done[i] || nodes_[i].has_plan();
        if (all_have_plan) break;
        if (cycles >= params_.max_cycles)
          throw RunError("no implementation reached within max_cycles and no plan to fall back on", t, tok_.k,
                         -1);
        if (!extended) {
          extended = true;
          log_.warnings.push_back("t=" + std::to_string(t) +
                                  ": cycle budget spent before any plan exists; negotiation extended");
        }
      }
      const int k = tok_.k;
      const double alpha = stepsize(k, params_.mu);
      bool violated = false;
      for (int pos = 0; pos < N_ && implemented < N_; ++pos) {
        const int i = ring_.order()[static_cast<std::size_t>(pos)];
        AgentNode& node = nodes_[i];
        if (done[i]) {
          ring_.deliver(tok_, t, pos, "pass");
          continue;
        }
        if (tok_.f_dmpc && tok_.f_sg) {
          tok_.J_prev(i) = node.last_solution->qvalue;
          take_plan(i, *node.last_solution, node.last_theta, inputs);
          tok_.theta_sub = node.last_theta;
          done[i] = true;
          ++implemented;
          ring_.deliver(tok_, t, pos, "implement");
          continue;
        }
        const Vector prev = tok_.theta_sub;
        const LocalMpcSolution sg = solve(i, prev, t, k);
        violated |= check_beta(sg.g.norm(), t, k, i);
        const Vector v = project_theta(sc_.theta_box, prev - alpha * sg.g);
        LocalMpcSolution sj = solve(i, v, t, k);
        tok_.J_curr(i) = sj.qvalue;
        node.last_theta = v;
        node.last_solution = std::move(sj);
        tok_.f_dmpc = improvement_test(tok_.J_curr, tok_.J_prev);
        tok_.theta_sub = v;
        log_.negotiation.push_back(
            {t, k, i, v, sg.g.norm(), alpha, convergence_bound(k, N_, params_.beta, params_.mu), sg.qvalue});
        ring_.deliver(tok_, t, pos, "subiterate");
      }
      if (implemented == N_) break;
      tok_.f_sg = !violated && sg_accuracy_test(k, t, params_, N_);
      ++tok_.k;
      ++cycles;
    }
    rec.cycles = cycles;
    rec.f_dmpc = tok_.f_dmpc;
    rec.f_sg = tok_.f_sg;
    rec.implemented = implemented == N_;
    rec.held = implemented < N_;
    for (int i = 0; i < N_; ++i) {
      if (done[i]) continue;
      inputs[i] = input_from_plan(nodes_[i], problems_[i].emap());
    }
    if (rec.implemented) rec.implemented_cost = tok_.J_prev.sum();
    if (implemented > 0 && implemented < N_)
      log_.warnings.push_back("t=" + std::to_string(t) + ": " + std::to_string(implemented) + " of " +
                              std::to_string(N_) + " agents implemented before the budget ran out");
  }

  const ScenarioConfig& sc_;
  RunMode mode_;
  RunOptions opts_;
  std::vector<LocalProblem> problems_;
  int N_;
  RingChannel ring_;
  NegotiationParams params_;
  std::optional<double> freeze_;
  std::vector<AgentNode> nodes_;
  Token tok_;
  bool frozen_ = false;
  Vector theta_frozen_;
  ClosedLoopLog log_;
};

}  // namespace

ClosedLoopLog algorithm1_run(const ScenarioConfig& scenario, const RunMode& mode, const RunOptions& opts) {
  scenario.validate_structure();
  if (mode.kind == RunMode::Kind::Interrupted && mode.cycle_budget < 1)
    throw ConfigError("interrupted mode needs a cycle budget >= 1");
  if (mode.kind == RunMode::Kind::FullyConverged && !(mode.tol > 0.0))
    throw ConfigError("converged mode needs tol > 0");
  return Runner(scenario, mode, opts).run();
}

}  // namespace dmpc
