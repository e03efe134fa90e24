#include "dmpc/agents.hpp"

#include <algorithm>
#include <sstream>

namespace dmpc {

namespace {

std::string fmt_vec(const Vector& v) {
  std::ostringstream os;
  os << "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v(i);
  os << ")";
  return os.str();
}

}  // namespace

Polyhedron Polyhedron::box(const Vector& lo, const Vector& hi) {
  if (lo.size() != hi.size()) throw ConfigError("box: lo/hi length mismatch");
  const Eigen::Index d = lo.size();
  Polyhedron p;
  p.H = Matrix::Zero(2 * d, d);
  p.h = Vector(2 * d);
  for (Eigen::Index i = 0; i < d; ++i) {
    p.H(2 * i, i) = 1.0;
    p.h(2 * i) = hi(i);
    p.H(2 * i + 1, i) = -1.0;
    p.h(2 * i + 1) = -lo(i);
  }
  return p;
}

void Polyhedron::validate() const {
  if (H.rows() < 1) throw ConfigError("polyhedron: needs at least one row");
  if (H.rows() != h.size()) throw ConfigError("polyhedron: H/h row count mismatch");
  if (!H.allFinite() || !h.allFinite()) throw ConfigError("polyhedron: non-finite data");
  for (Eigen::Index i = 0; i < H.rows(); ++i)
    if (H.row(i).cwiseAbs().maxCoeff() == 0.0 && h(i) < 0.0)
      throw ConfigError("polyhedron: row " + std::to_string(i) + " is 0 <= negative (empty set)");
}

bool Polyhedron::contains(const Vector& z, double tol) const {
  return z.size() == H.cols() && (H * z - h).maxCoeff() <= tol;
}

double Polyhedron::margin(const Vector& z) const { return (h - H * z).minCoeff(); }

void BoxSet::validate() const {
  if (lo.size() != hi.size()) throw ConfigError("box: lo/hi length mismatch");
  if (lo.size() == 0) throw ConfigError("box: empty dimension");
  if (!lo.allFinite() || !hi.allFinite()) throw ConfigError("box: bounds must be finite (compact set)");
  for (Eigen::Index i = 0; i < lo.size(); ++i)
    if (lo(i) > hi(i)) throw ConfigError("box: lo > hi in coordinate " + std::to_string(i));
}

bool BoxSet::contains(const Vector& theta, double tol) const {
  if (theta.size() != lo.size()) return false;
  for (Eigen::Index i = 0; i < lo.size(); ++i)
    if (theta(i) < lo(i) - tol || theta(i) > hi(i) + tol) return false;
  return true;
}

std::vector<Vector> BoxSet::vertices() const {
  const Eigen::Index p = lo.size();
  std::vector<Vector> out;
  const std::size_t count = std::size_t{1} << p;
  out.reserve(count);
  for (std::size_t mask = 0; mask < count; ++mask) {
    Vector v(p);
    for (Eigen::Index j = 0; j < p; ++j) v(j) = (mask >> j) & 1U ? hi(j) : lo(j);
    out.push_back(std::move(v));
  }
  return out;
}

void LinearAgent::check_dimensions() const {
  const auto nn = n();
  if (A.cols() != nn) throw ConfigError(name + ": A must be square");
  if (B.rows() != nn) throw ConfigError(name + ": B row count must equal n");
  if (C.cols() != nn) throw ConfigError(name + ": C column count must equal n");
  if (Q.rows() != nn || Q.cols() != nn) throw ConfigError(name + ": Q must be n x n");
  if (R.rows() != m() || R.cols() != m()) throw ConfigError(name + ": R must be m x m");
  if (!is_symmetric(Q, 1e-10 * std::max(1.0, inf_norm(Q)))) throw ConfigError(name + ": Q not symmetric");
  if (!is_symmetric(R, 1e-10 * std::max(1.0, inf_norm(R)))) throw ConfigError(name + ": R not symmetric");
  X.validate();
  U.validate();
  if (X.dim() != nn) throw ConfigError(name + ": state set dimension must equal n");
  if (U.dim() != m()) throw ConfigError(name + ": input set dimension must equal m");
}

EquilibriumMap equilibrium_map(const LinearAgent& agent) {
  const auto n = agent.n(), m = agent.m(), p = agent.p();
  if (n + m < p) throw NoEquilibriumError(agent.name + ": n + m < p, no equilibrium for generic theta");

  Matrix M = Matrix::Zero(n + p, n + m);
  M.topLeftCorner(n, n) = agent.A - Matrix::Identity(n, n);
  M.topRightCorner(n, m) = agent.B;
  M.bottomLeftCorner(p, n) = agent.C;
  Matrix rhs = Matrix::Zero(n + p, p);
  rhs.bottomRows(p) = Matrix::Identity(p, p);

  EquilibriumMap em;
  Matrix sol;
  if (M.rows() == M.cols()) {
    try {
      sol = solve_linear(M, rhs);
    } catch (const SingularMatrixError&) {
      throw NoEquilibriumError(agent.name + ": equilibrium system [[A-I, B], [C, 0]] is singular");
    }
  } else {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(M);
    cod.setThreshold(1e-10);
    sol = cod.solve(rhs);
    em.unique = cod.rank() == n + m;
    if (inf_norm(Matrix(M * sol - rhs)) > 1e-8)
      throw NoEquilibriumError(agent.name + ": equilibrium system is inconsistent");
  }
  em.Ex = sol.topRows(n);
  em.Eu = sol.bottomRows(m);
  return em;
}

double stage_cost(const LinearAgent& agent, const Vector& x, const Vector& u, const Vector& theta,
                  const EquilibriumMap& emap) {
  if (x.size() != agent.n() || u.size() != agent.m() || theta.size() != agent.p())
    throw ConfigError(agent.name + ": stage_cost dimension mismatch");
  const Vector dx = x - emap.x_e(theta);
  const Vector du = u - emap.u_e(theta);
  return dx.dot(agent.Q * dx) + du.dot(agent.R * du);
}

bool ValidationReport::passed() const { return first_failure().empty(); }

std::string ValidationReport::first_failure() const {
  if (!weights_pd) return "weights: Q and R must be positive definite";
  if (!controllable)
    return "controllability: rank " + std::to_string(controllability_rank) + " < " + std::to_string(n);
  if (!observable)
    return "observability of (A, Q^1/2): rank " + std::to_string(observability_rank) + " < " + std::to_string(n);
  if (!equilibrium_exists) return "equilibrium: " + equilibrium_error;
  if (!equilibrium_unique) return "equilibrium: not unique";
  return {};
}

ValidationReport validate_agent(const LinearAgent& agent) {
  ValidationReport r;
  const auto n = agent.n();
  r.n = n;

  Matrix ctrb(n, n * agent.m());
  Matrix blk = agent.B;
  for (Eigen::Index k = 0; k < n; ++k) {
    ctrb.middleCols(k * agent.m(), agent.m()) = blk;
    blk = agent.A * blk;
  }
  r.controllability_rank = numerical_rank(ctrb);
  r.controllable = r.controllability_rank == n;

  const Matrix Qh = symmetric_sqrt(agent.Q);
  Matrix obsv(n * n, n);
  Matrix rowblk = Qh;
  for (Eigen::Index k = 0; k < n; ++k) {
    obsv.middleRows(k * n, n) = rowblk;
    rowblk = rowblk * agent.A;
  }
  r.observability_rank = numerical_rank(obsv);
  r.observable = r.observability_rank == n;

  r.q_min_eig = min_eigenvalue(agent.Q);
  r.r_min_eig = min_eigenvalue(agent.R);
  r.weights_pd = r.q_min_eig > 0.0 && r.r_min_eig > 0.0;

  try {
    const EquilibriumMap em = equilibrium_map(agent);
    r.equilibrium_exists = true;
    r.equilibrium_unique = em.unique;
  } catch (const NoEquilibriumError& e) {
    r.equilibrium_error = e.what();
  }
  return r;
}

InteriorReport check_equilibria_interior(const LinearAgent& agent, const EquilibriumMap& emap,
                                         const BoxSet& box, double margin) {
  InteriorReport r;
  r.min_state_margin = std::numeric_limits<double>::infinity();
  r.min_input_margin = std::numeric_limits<double>::infinity();
  for (const Vector& v : box.vertices()) {
    const double sm = agent.X.margin(emap.x_e(v));
    const double um = agent.U.margin(emap.u_e(v));
    r.min_state_margin = std::min(r.min_state_margin, sm);
    r.min_input_margin = std::min(r.min_input_margin, um);
    if (r.passed && (sm < margin || um < margin)) {
      r.passed = false;
      r.detail = agent.name + ": equilibrium at theta vertex " + fmt_vec(v) + " not interior (" +
                 (sm < margin ? "state" : "input") + " margin " + std::to_string(std::min(sm, um)) + ")";
    }
  }
  return r;
}

}  // namespace dmpc
