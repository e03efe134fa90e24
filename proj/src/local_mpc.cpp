#include "dmpc/local_mpc.hpp"

#include <cmath>

namespace dmpc {

LocalInfeasibleError::LocalInfeasibleError(std::string agent, Vector theta, QpStatus status)
    : std::runtime_error([&] {
        std::string msg = "local problem of agent '" + agent + "' not solved (" +
                          std::string(to_string(status)) + ") at theta = (";
        for (Eigen::Index i = 0; i < theta.size(); ++i) msg += (i ? ", " : "") + std::to_string(theta(i));
        return msg + ")";
      }()),
      agent_(std::move(agent)),
      theta_(std::move(theta)),
      status_(status) {}

LocalProblem::LocalProblem(LinearAgent agent, int horizon) : agent_(std::move(agent)), horizon_(horizon) {
  agent_.check_dimensions();
  if (horizon_ < 1) throw ConfigError("horizon must be >= 1");
  emap_ = equilibrium_map(agent_);

  const Eigen::Index n = agent_.n(), m = agent_.m(), p = agent_.p();
  const Eigen::Index T = horizon_;
  const Eigen::Index nu = m * T;
  const Eigen::Index nv = nu + p + n;
  const Eigen::Index ru = agent_.U.H.rows(), rx = agent_.X.H.rows();

  P_ = Matrix::Zero(nv, nv);
  G_ = Matrix::Zero(T * (ru + rx), nu);
  b0_ = Vector::Zero(T * (ru + rx));
  Gx_ = Matrix::Zero(T * (ru + rx), n);

  Matrix gam = Matrix::Zero(n, nu);
  Matrix phi = Matrix::Identity(n, n);
  Matrix L = Matrix::Zero(n, nv);
  Matrix M = Matrix::Zero(m, nv);
  L.middleCols(nu, p) = -emap_.Ex;
  M.middleCols(nu, p) = -emap_.Eu;

  for (Eigen::Index k = 0; k < T; ++k) {
    L.leftCols(nu) = gam;
    L.rightCols(n) = phi;
    P_.noalias() += L.transpose() * agent_.Q * L;
    M.leftCols(nu).setZero();
    M.block(0, k * m, m, m) = Matrix::Identity(m, m);
    P_.noalias() += M.transpose() * agent_.R * M;

    const Eigen::Index urow = k * ru;
    G_.block(urow, k * m, ru, m) = agent_.U.H;
    b0_.segment(urow, ru) = agent_.U.h;

    gam = agent_.A * gam;
    gam.middleCols(k * m, m) += agent_.B;
    phi = agent_.A * phi;

    const Eigen::Index xrow = T * ru + k * rx;
    G_.middleRows(xrow, rx) = agent_.X.H * gam;
    b0_.segment(xrow, rx) = agent_.X.h;
    Gx_.middleRows(xrow, rx) = -agent_.X.H * phi;
  }
  P_ = 0.5 * (P_ + P_.transpose()).eval();
  gamma_T_ = gam;
  phi_T_ = phi;
}

void LocalProblem::check_inputs(const Vector& x0, const Vector& theta) const {
  if (x0.size() != agent_.n()) throw ConfigError(agent_.name + ": state dimension mismatch");
  if (theta.size() != agent_.p()) throw ConfigError(agent_.name + ": theta dimension mismatch");
}

LocalQp LocalProblem::build(const Vector& x0, const Vector& theta) const {
  check_inputs(x0, theta);
  const Eigen::Index nu = input_dim(), p = agent_.p(), n = agent_.n();
  const auto Puu = P_.topLeftCorner(nu, nu);
  const auto Put = P_.block(0, nu, nu, p);
  const auto Pux = P_.block(0, nu + p, nu, n);
  const auto Ptt = P_.block(nu, nu, p, p);
  const auto Ptx = P_.block(nu, nu + p, p, n);
  const auto Pxx = P_.block(nu + p, nu + p, n, n);

  LocalQp lq;
  lq.qp.H = 2.0 * Puu;
  lq.qp.f = 2.0 * (Put * theta + Pux * x0);
  lq.constant = theta.dot(Ptt * theta) + 2.0 * theta.dot(Ptx * x0) + x0.dot(Pxx * x0);
  lq.qp.Aeq = gamma_T_;
  lq.qp.beq = emap_.Ex * theta - phi_T_ * x0;
  lq.qp.Ain = G_;
  lq.qp.bin = b0_ + Gx_ * x0;
  lq.terminal_begin = 0;
  lq.terminal_rows = gamma_T_.rows();
  return lq;
}

Matrix LocalProblem::predict(const Vector& x0, const Matrix& Useq) const {
  Matrix X(agent_.n(), horizon_ + 1);
  X.col(0) = x0;
  for (int k = 0; k < horizon_; ++k) X.col(k + 1) = agent_.A * X.col(k) + agent_.B * Useq.col(k);
  return X;
}

LocalMpcSolution LocalProblem::solve(const Vector& x0, const Vector& theta, const QpOptions& opts) const {
  const LocalQp lq = build(x0, theta);
  const QpSolution s = solve_qp(lq.qp, opts);
  if (s.status != QpStatus::Optimal) throw LocalInfeasibleError(agent_.name, theta, s.status);

  const Eigen::Index m = agent_.m(), nu = input_dim(), p = agent_.p(), n = agent_.n();
  LocalMpcSolution out;
  out.status = s.status;
  out.theta = theta;
  out.Useq = Eigen::Map<const Matrix>(s.z.data(), m, horizon_);
  out.Xtraj = predict(x0, out.Useq);
  out.active_inequalities = s.active;
  out.lam_terminal = s.lam_eq.segment(lq.terminal_begin, lq.terminal_rows);

  // Summing nonnegative stage terms avoids cancellation between the QP value
  // and the constant offset.
  double q = 0.0;
  for (int k = 0; k < horizon_; ++k)
    q += stage_cost(agent_, out.Xtraj.col(k), out.Useq.col(k), theta, emap_);
  out.qvalue = q;

  out.g = 2.0 * (P_.block(nu, 0, p, nu) * s.z + P_.block(nu, nu, p, p) * theta +
                 P_.block(nu, nu + p, p, n) * x0) -
          emap_.Ex.transpose() * out.lam_terminal;
  return out;
}

double LocalProblem::cost(const Vector& x0, const Vector& theta, const QpOptions& opts) const {
  return solve(x0, theta, opts).qvalue;
}

LocalQp build_local_qp(const LocalProblem& problem, const Vector& x0, const Vector& theta) {
  return problem.build(x0, theta);
}

LocalMpcSolution solve_local(const LocalProblem& problem, const Vector& x0, const Vector& theta,
                             const QpOptions& opts) {
  return problem.solve(x0, theta, opts);
}

FdSubgradient subgradient_fd_oracle(const LocalProblem& problem, const Vector& x0, const Vector& theta,
                                    double step, const QpOptions& opts) {
  FdSubgradient out;
  out.g = Vector::Zero(theta.size());
  out.one_sided.assign(static_cast<std::size_t>(theta.size()), false);
  std::optional<double> center;
  auto eval = [&](const Vector& th) -> std::optional<double> {
    try {
      return problem.cost(x0, th, opts);
    } catch (const LocalInfeasibleError&) {
      return std::nullopt;
    }
  };
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const double h = step * (1.0 + std::abs(theta(j)));
    Vector tp = theta, tm = theta;
    tp(j) += h;
    tm(j) -= h;
    const auto qp = eval(tp);
    const auto qm = eval(tm);
    if (qp && qm) {
      out.g(j) = (*qp - *qm) / (2.0 * h);
      continue;
    }
    if (!center) center = problem.cost(x0, theta, opts);
    out.one_sided[static_cast<std::size_t>(j)] = true;
    if (qp) {
      out.g(j) = (*qp - *center) / h;
    } else if (qm) {
      out.g(j) = (*center - *qm) / h;
    } else {
      throw LocalInfeasibleError(problem.agent().name, theta, QpStatus::Infeasible);
    }
  }
  return out;
}

}  // namespace dmpc
