#pragma once

// Token-ring negotiation interleaved with receding-horizon implementation.

#include <optional>
#include <string>
#include <vector>

#include "dmpc/consensus.hpp"
#include "dmpc/scenario.hpp"

namespace dmpc {

/// Stand-in for the "large number" that initializes J_prev. Positive, so the
/// very first improvement test passes.
inline constexpr double kJPrevInit = 1e12;

struct Token {
  Vector theta_sub;
  int k = 0;
  bool f_dmpc = false;
  bool f_sg = false;
  Vector J_curr;
  Vector J_prev;
};

struct AgentNode {
  int id = 0;
  Vector state;
  Vector last_theta;  // vartheta^i this agent would implement
  std::optional<LocalMpcSolution> last_solution;
  // plan currently being executed (held between implementations)
  Matrix plan;
  int plan_offset = 0;
  Vector plan_theta;
  bool has_plan() const { return plan.cols() > 0; }
};

/// Fixed cyclic order; counts deliveries and optionally keeps a text log.
class RingChannel {
 public:
  explicit RingChannel(int n, bool keep_log = false);
  int size() const { return static_cast<int>(order_.size()); }
  const std::vector<int>& order() const { return order_; }
  int next(int pos) const { return (pos + 1) % size(); }
  void deliver(const Token& token, int t, int from_pos, const std::string& what);
  long long deliveries() const { return deliveries_; }
  const std::vector<std::string>& log() const { return log_; }
  std::vector<std::string> take_log() { return std::move(log_); }

 private:
  std::vector<int> order_;
  long long deliveries_ = 0;
  bool keep_log_;
  std::vector<std::string> log_;
};

class RunError : public std::runtime_error {
 public:
  RunError(const std::string& what, int t, int k, int agent);
  int t() const { return t_; }
  int k() const { return k_; }
  int agent() const { return agent_; }

 private:
  int t_, k_, agent_;
};

class InvariantBreach : public RunError {
 public:
  using RunError::RunError;
};

/// sum_i (J_curr^i - J_prev^i) <= 0
bool improvement_test(const Vector& J_curr, const Vector& J_prev);

/// convergence_bound(k, N, beta, mu) <= eps / (t+1)
bool sg_accuracy_test(int k, int t, const NegotiationParams& params, int N);

/// Advances every agent by one step. Inputs must lie in U and the successor
/// states in X (tolerance `tol`), otherwise InvariantBreach.
void closed_loop_step(std::vector<AgentNode>& nodes, const std::vector<LinearAgent>& agents,
                      const std::vector<Vector>& inputs, int t = 0, double tol = 1e-6);

struct RunMode {
  enum class Kind { Interrupted, FullyConverged };
  Kind kind = Kind::Interrupted;
  int cycle_budget = 15;
  double tol = 1e-7;

  static RunMode interrupted(int budget) { return {Kind::Interrupted, budget, 0.0}; }
  static RunMode fully_converged(double tol) { return {Kind::FullyConverged, 0, tol}; }
  std::string name() const { return kind == Kind::Interrupted ? "interrupted" : "converged"; }
};

struct RunOptions {
  int steps = -1;  // < 0: scenario value
  bool compute_oracle = false;
  bool record_events = false;
  std::optional<double> freeze_theta_below;  // overrides the scenario value when set
  // Interrupted runs keep every subiteration. Converged runs keep t = 0 in
  // full and, for t > 0, the first `thin_keep` cycles plus the last one.
  bool thin_converged_log = true;
  int thin_keep = 20;
  QpOptions qp;
};

struct StepRecord {
  int t = 0;
  std::vector<Vector> x;           // states at t
  std::vector<Vector> u;           // applied inputs
  std::vector<Vector> y;           // outputs C x_t
  std::vector<Vector> subiterate;  // last vartheta_t^i
  std::vector<Vector> plan_theta;  // terminal point of the plan each agent executes
  Vector J_curr, J_prev;
  bool f_dmpc = false;
  bool f_sg = false;
  bool implemented = false;  // fresh plans taken at t
  bool held = false;         // previous plans continued
  bool frozen = false;
  int cycles = 0;
  double implemented_cost = 0.0;  // sum_i J^i of the fresh plans; NaN unless implemented
  std::optional<Vector> theta_star;
  std::optional<double> Jstar;
  std::vector<double> mismatch;  // ||vartheta_t^i - theta_t*||
  double max_mismatch = 0.0;
  double beta = 0.0;
  double theta_change = 0.0;  // converged mode: last ||theta(k+1) - theta(k)||
};

struct SubiterationRow {
  int t = 0;
  int k = 0;
  int agent = 0;
  Vector theta;  // vartheta^i(k)
  double g_norm = 0.0;
  double alpha = 0.0;
  double bound = 0.0;
  double q = 0.0;  // q^i at vartheta^i(k)
};

struct ClosedLoopLog {
  std::string mode;
  int N = 0;
  NegotiationParams params;  // beta as inflated at the end of the run
  std::vector<StepRecord> steps;
  std::vector<SubiterationRow> negotiation;
  std::vector<std::string> events;
  std::vector<Vector> final_states;
  std::vector<std::string> warnings;
  long long deliveries = 0;
};

ClosedLoopLog algorithm1_run(const ScenarioConfig& scenario, const RunMode& mode, const RunOptions& opts = {});

}  // namespace dmpc
