#include "dmpc/centralized.hpp"

namespace dmpc {

CentralizedSolution solve_centralized(std::span<const LocalProblem> agents, std::span<const Vector> states,
                                      const BoxSet& box, const QpOptions& opts) {
  if (agents.empty()) throw ConfigError("centralized: no agents");
  if (agents.size() != states.size()) throw ConfigError("centralized: one state per agent required");
  box.validate();
  const Eigen::Index p = box.dim();

  Eigen::Index nu_total = 0, neq = 0, nin = 0;
  for (const auto& a : agents) {
    if (a.agent().p() != p) throw ConfigError("centralized: agents must share the consensus dimension");
    nu_total += a.input_dim();
    neq += a.terminal_gamma().rows();
    nin += a.ineq_G().rows();
  }
  const Eigen::Index d = nu_total + p;
  const Eigen::Index th = nu_total;

  QpProblem qp;
  qp.H = Matrix::Zero(d, d);
  qp.f = Vector::Zero(d);
  qp.Aeq = Matrix::Zero(neq, d);
  qp.beq = Vector::Zero(neq);
  qp.Ain = Matrix::Zero(nin + 2 * p, d);
  qp.bin = Vector::Zero(nin + 2 * p);

  Eigen::Index off = 0, eq_row = 0, in_row = 0;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const LocalProblem& a = agents[i];
    const Vector& x = states[i];
    if (x.size() != a.agent().n()) throw ConfigError("centralized: state dimension mismatch");
    const Eigen::Index nu = a.input_dim(), n = a.agent().n();
    const Matrix& P = a.P();
    qp.H.block(off, off, nu, nu) = 2.0 * P.topLeftCorner(nu, nu);
    qp.H.block(off, th, nu, p) = 2.0 * P.block(0, nu, nu, p);
    qp.H.block(th, off, p, nu) = 2.0 * P.block(nu, 0, p, nu);
    qp.H.block(th, th, p, p) += 2.0 * P.block(nu, nu, p, p);
    qp.f.segment(off, nu) = 2.0 * P.block(0, nu + p, nu, n) * x;
    qp.f.segment(th, p) += 2.0 * P.block(nu, nu + p, p, n) * x;

    const Eigen::Index ne = a.terminal_gamma().rows();
    qp.Aeq.block(eq_row, off, ne, nu) = a.terminal_gamma();
    qp.Aeq.block(eq_row, th, ne, p) = -a.emap().Ex;
    qp.beq.segment(eq_row, ne) = -a.terminal_phi() * x;

    const Eigen::Index ni = a.ineq_G().rows();
    qp.Ain.block(in_row, off, ni, nu) = a.ineq_G();
    qp.bin.segment(in_row, ni) = a.ineq_b0() + a.ineq_Gx() * x;

    off += nu;
    eq_row += ne;
    in_row += ni;
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    qp.Ain(nin + j, th + j) = 1.0;
    qp.bin(nin + j) = box.hi(j);
    qp.Ain(nin + p + j, th + j) = -1.0;
    qp.bin(nin + p + j) = -box.lo(j);
  }
  qp.H = 0.5 * (qp.H + qp.H.transpose()).eval();

  const QpSolution s = solve_qp(qp, opts);
  if (s.status != QpStatus::Optimal) throw CentralizedInfeasibleError(s.status);

  CentralizedSolution out;
  out.iterations = s.iterations;
  out.theta_star = s.z.segment(th, p);
  out.box_duals = s.mu_in.tail(2 * p);
  out.lam_terminal = s.lam_eq;
  off = 0;
  double J = 0.0;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const LocalProblem& a = agents[i];
    const Eigen::Index nu = a.input_dim();
    const Vector u = s.z.segment(off, nu);
    Matrix U = Eigen::Map<const Matrix>(u.data(), a.agent().m(), a.horizon());
    const Matrix X = a.predict(states[i], U);
    for (int k = 0; k < a.horizon(); ++k)
      J += stage_cost(a.agent(), X.col(k), U.col(k), out.theta_star, a.emap());
    out.Ustar.push_back(std::move(U));
    off += nu;
  }
  out.Jstar = J;
  return out;
}

double total_cost(std::span<const LocalProblem> agents, std::span<const Vector> states, const Vector& theta,
                  const QpOptions& opts) {
  double sum = 0.0;
  for (std::size_t i = 0; i < agents.size(); ++i) sum += agents[i].cost(states[i], theta, opts);
  return sum;
}

}  // namespace dmpc
