#include "dmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace dmpc {

std::string_view to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Optimal: return "Optimal";
    case QpStatus::Infeasible: return "Infeasible";
    case QpStatus::Unbounded: return "Unbounded";
    case QpStatus::MaxIter: return "MaxIter";
  }
  return "?";
}

namespace {

void check_dimensions(const QpProblem& p) {
  const Eigen::Index d = p.f.size();
  if (p.H.rows() != d || p.H.cols() != d) throw ConfigError("qp: H must be d x d with d = len(f)");
  if (p.Aeq.cols() != d && !(p.Aeq.rows() == 0)) throw ConfigError("qp: Aeq column count mismatch");
  if (p.Aeq.rows() != p.beq.size()) throw ConfigError("qp: Aeq/beq row count mismatch");
  if (p.Ain.cols() != d && !(p.Ain.rows() == 0)) throw ConfigError("qp: Ain column count mismatch");
  if (p.Ain.rows() != p.bin.size()) throw ConfigError("qp: Ain/bin row count mismatch");
  if (!p.H.allFinite() || !p.f.allFinite() || !p.Aeq.allFinite() || !p.beq.allFinite() ||
      !p.Ain.allFinite() || !p.bin.allFinite())
    throw ConfigError("qp: non-finite data");
  if (!is_symmetric(p.H, 1e-10 * std::max(1.0, inf_norm(p.H)))) throw ConfigError("qp: H is not symmetric");
}

void check_psd(const Matrix& H) {
  if (H.size() == 0) return;
  Eigen::SelfAdjointEigenSolver<Matrix> es(H, Eigen::EigenvaluesOnly);
  const double norm = es.eigenvalues().cwiseAbs().maxCoeff();
  if (es.eigenvalues().minCoeff() < -1e-9 * norm)
    throw ConfigError("qp: H is not positive semidefinite (min eigenvalue " +
                      std::to_string(es.eigenvalues().minCoeff()) + ")");
}

// Equality rows are always in the working set; inequality rows enter when
// they block a step and leave when their multiplier turns negative.
struct ActiveSetState {
  Vector z;
  std::vector<int> work;
  Vector mult;  // [equality rows, working inequality rows] at exit
  int iterations = 0;
};

enum class CoreExit { Optimal, Unbounded, MaxIter, Stopped };

Vector least_squares_multipliers(const Matrix& AW, const Vector& g) {
  if (AW.rows() == 0) return Vector(0);
  return AW.transpose().colPivHouseholderQr().solve(-g);
}

template <class StopFn>
CoreExit active_set(const Matrix& H, const Vector& f, const Matrix& E, const Matrix& G, const Vector& h,
                    const Eigen::LLT<Matrix>* llt, double tol, int max_iter, ActiveSetState& st,
                    StopFn&& stop) {
  const Eigen::Index d = f.size();
  const Eigen::Index ne = E.rows();
  std::vector<char> in_work(static_cast<std::size_t>(G.rows()), 0);
  for (int i : st.work) in_work[static_cast<std::size_t>(i)] = 1;
  bool at_minimizer = false;

  while (st.iterations < max_iter) {
    ++st.iterations;
    const auto nw = static_cast<Eigen::Index>(st.work.size());
    Matrix AW(ne + nw, d);
    if (ne > 0) AW.topRows(ne) = E;
    for (Eigen::Index k = 0; k < nw; ++k) AW.row(ne + k) = G.row(st.work[static_cast<std::size_t>(k)]);

    const Vector g = H * st.z + f;
    const double gscale = 1.0 + inf_norm(g);
    Vector p = Vector::Zero(d);
    bool ray = false;

    if (!at_minimizer) {
      if (llt != nullptr) {
        const Vector Hg = llt->solve(g);
        if (AW.rows() > 0) {
          const Matrix HA = llt->solve(AW.transpose());
          const Matrix S = AW * HA;
          const Vector lam = -S.ldlt().solve(AW * Hg);
          p = -(Hg + HA * lam);
        } else {
          p = -Hg;
        }
      } else if (AW.rows() < d) {
        Matrix Z;
        if (AW.rows() == 0) {
          Z = Matrix::Identity(d, d);
        } else {
          Eigen::HouseholderQR<Matrix> qr(AW.transpose());
          const Matrix Q = qr.householderQ();
          Z = Q.rightCols(d - AW.rows());
        }
        Matrix Hr = Z.transpose() * H * Z;
        Hr = 0.5 * (Hr + Hr.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Matrix> es(Hr);
        const Vector& ev = es.eigenvalues();
        const Matrix& V = es.eigenvectors();
        const Vector c = V.transpose() * (Z.transpose() * g);
        const double thr = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
        double null_grad = 0.0;
        for (Eigen::Index j = 0; j < ev.size(); ++j)
          if (ev(j) <= thr) null_grad += c(j) * c(j);
        Vector y = Vector::Zero(ev.size());
        if (std::sqrt(null_grad) > 1e-11 * gscale) {
          ray = true;
          for (Eigen::Index j = 0; j < ev.size(); ++j)
            if (ev(j) <= thr) y(j) = -c(j);
        } else {
          for (Eigen::Index j = 0; j < ev.size(); ++j)
            if (ev(j) > thr) y(j) = -c(j) / ev(j);
        }
        p = Z * (V * y);
      }
    }

    if (at_minimizer || inf_norm(p) <= 1e-13 * (1.0 + inf_norm(st.z))) {
      Vector mult = least_squares_multipliers(AW, g);
      const double dual_tol = 1e-3 * tol * gscale;
      Eigen::Index drop = -1;
      double worst = -dual_tol;
      for (Eigen::Index k = 0; k < nw; ++k) {
        if (mult(ne + k) < worst) {
          worst = mult(ne + k);
          drop = k;
        }
      }
      if (drop < 0) {
        st.mult = std::move(mult);
        return CoreExit::Optimal;
      }
      in_work[static_cast<std::size_t>(st.work[static_cast<std::size_t>(drop)])] = 0;
      st.work.erase(st.work.begin() + drop);
      at_minimizer = false;
      continue;
    }

    // ratio test; ties resolve to the lowest row index
    const double dir_tol = 1e-9 * p.norm();
    double alpha = ray ? std::numeric_limits<double>::infinity() : 1.0;
    Eigen::Index block = -1;
    if (G.rows() > 0) {
      const Vector Gp = G * p;
      const Vector slack = h - G * st.z;
      for (Eigen::Index i = 0; i < G.rows(); ++i) {
        if (in_work[static_cast<std::size_t>(i)] || Gp(i) <= dir_tol) continue;
        const double a = std::max(0.0, slack(i)) / Gp(i);
        if (a < alpha) {
          alpha = a;
          block = i;
        }
      }
    }
    if (block < 0 && ray) return CoreExit::Unbounded;

    st.z += alpha * p;
    if (block >= 0) {
      st.work.push_back(static_cast<int>(block));
      in_work[static_cast<std::size_t>(block)] = 1;
      at_minimizer = false;
    } else {
      at_minimizer = true;
    }
    if (stop(st.z)) return CoreExit::Stopped;
  }
  return CoreExit::MaxIter;
}

}  // namespace

void check_qp(const QpProblem& p) {
  check_dimensions(p);
  check_psd(p.H);
}

QpSolution solve_qp(const QpProblem& p, const QpOptions& opts) {
  if (!(opts.tol > 0.0)) throw ConfigError("qp: tol must be positive");
  check_dimensions(p);

  const Eigen::Index d = p.dim();
  const Eigen::Index me = p.Aeq.rows();
  const Eigen::Index mi = p.Ain.rows();

  QpSolution out;
  out.z = Vector::Zero(d);
  out.lam_eq = Vector::Zero(me);
  out.mu_in = Vector::Zero(mi);

  // Column scaling toward a unit-diagonal Hessian, then unit-norm constraint rows.
  Vector col = Vector::Ones(d);
  const double hmax = d > 0 ? p.H.diagonal().maxCoeff() : 0.0;
  for (Eigen::Index j = 0; j < d; ++j)
    if (p.H(j, j) > 1e-12 * hmax && p.H(j, j) > 0.0) col(j) = 1.0 / std::sqrt(p.H(j, j));

  Matrix Hs = col.asDiagonal() * p.H * col.asDiagonal();
  Hs = 0.5 * (Hs + Hs.transpose()).eval();
  const Vector fs = col.cwiseProduct(p.f);

  auto normalize_rows = [&](const Matrix& A, const Vector& b, Matrix& As, Vector& bs, Vector& scale) {
    As = A.rows() > 0 ? Matrix(A * col.asDiagonal()) : Matrix(0, d);
    bs = b;
    scale = Vector::Ones(A.rows());
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      const double nrm = As.row(i).norm();
      if (nrm > 0.0) {
        scale(i) = 1.0 / nrm;
        As.row(i) *= scale(i);
        bs(i) *= scale(i);
      }
    }
  };
  Matrix Es_all, Gs;
  Vector es_all, hs, eq_scale, in_scale;
  normalize_rows(p.Aeq, p.beq, Es_all, es_all, eq_scale);
  normalize_rows(p.Ain, p.bin, Gs, hs, in_scale);

  const double feas_tol = 1e-3 * opts.tol;
  for (Eigen::Index i = 0; i < mi; ++i) {
    if (Gs.row(i).squaredNorm() == 0.0 && hs(i) < -opts.tol) {
      out.status = QpStatus::Infeasible;
      return out;
    }
  }

  // Independent equality rows (pivoted QR on the transpose; order fixed by index).
  std::vector<int> eq_rows;
  if (me > 0) {
    Eigen::ColPivHouseholderQR<Matrix> qr(Es_all.transpose());
    qr.setThreshold(1e-10);
    const auto rank = qr.rank();
    for (Eigen::Index r = 0; r < rank; ++r) eq_rows.push_back(qr.colsPermutation().indices()(r));
    std::sort(eq_rows.begin(), eq_rows.end());
  }
  Matrix E(static_cast<Eigen::Index>(eq_rows.size()), d);
  Vector e(static_cast<Eigen::Index>(eq_rows.size()));
  for (std::size_t r = 0; r < eq_rows.size(); ++r) {
    E.row(static_cast<Eigen::Index>(r)) = Es_all.row(eq_rows[r]);
    e(static_cast<Eigen::Index>(r)) = es_all(eq_rows[r]);
  }

  Vector z0 = Vector::Zero(d);
  if (E.rows() > 0) z0 = E.completeOrthogonalDecomposition().solve(e);
  if (me > 0 && inf_norm(Vector(Es_all * z0 - es_all)) > 1e-9 * (1.0 + inf_norm(es_all))) {
    out.status = QpStatus::Infeasible;
    return out;
  }

  int iterations = 0;

  // Phase 1: minimize s over (z, s) with Gs z - s <= hs, s >= 0.
  const double violation = mi > 0 ? (Gs * z0 - hs).maxCoeff() : 0.0;
  if (violation > 0.0) {
    const Eigen::Index d1 = d + 1;
    const Matrix H1 = Matrix::Zero(d1, d1);
    Vector f1 = Vector::Zero(d1);
    f1(d) = 1.0;
    Matrix E1 = Matrix::Zero(E.rows(), d1);
    E1.leftCols(d) = E;
    Matrix G1 = Matrix::Zero(mi + 1, d1);
    G1.topLeftCorner(mi, d) = Gs;
    G1.col(d).head(mi).setConstant(-1.0);
    G1(mi, d) = -1.0;
    Vector h1(mi + 1);
    h1.head(mi) = hs;
    h1(mi) = 0.0;

    ActiveSetState ph1;
    ph1.z.resize(d1);
    ph1.z.head(d) = z0;
    ph1.z(d) = violation;
    const CoreExit ex = active_set(H1, f1, E1, G1, h1, nullptr, opts.tol, opts.max_iter, ph1,
                                   [d](const Vector& w) { return w(d) <= 0.0; });
    iterations += ph1.iterations;
    if (ex == CoreExit::MaxIter) {
      out.status = QpStatus::MaxIter;
      out.iterations = iterations;
      return out;
    }
    if (ex != CoreExit::Stopped && ph1.z(d) > feas_tol) {
      out.status = QpStatus::Infeasible;
      out.iterations = iterations;
      return out;
    }
    z0 = ph1.z.head(d);
  }

  // Phase 2.
  std::optional<Eigen::LLT<Matrix>> llt;
  {
    Eigen::LLT<Matrix> chol(Hs);
    if (chol.info() == Eigen::Success) {
      const Vector ld = Matrix(chol.matrixL()).diagonal().cwiseAbs2();
      if (ld.size() > 0 && ld.minCoeff() >= 1e-11 * ld.maxCoeff()) llt = std::move(chol);
    }
  }
  if (!llt) check_psd(p.H);

  ActiveSetState st;
  st.z = z0;
  st.iterations = iterations;
  const CoreExit ex = active_set(Hs, fs, E, Gs, hs, llt ? &*llt : nullptr, opts.tol, opts.max_iter, st,
                                 [](const Vector&) { return false; });
  out.iterations = st.iterations;
  out.z = col.cwiseProduct(st.z);

  switch (ex) {
    case CoreExit::Optimal: out.status = QpStatus::Optimal; break;
    case CoreExit::Unbounded: out.status = QpStatus::Unbounded; break;
    default: out.status = QpStatus::MaxIter; break;
  }
  if (out.status == QpStatus::Optimal) {
    const auto ne = static_cast<Eigen::Index>(eq_rows.size());
    for (Eigen::Index r = 0; r < ne; ++r) {
      const int row = eq_rows[static_cast<std::size_t>(r)];
      out.lam_eq(row) = eq_scale(row) * st.mult(r);
    }
    for (std::size_t k = 0; k < st.work.size(); ++k) {
      const int row = st.work[k];
      out.mu_in(row) = std::max(0.0, in_scale(row) * st.mult(ne + static_cast<Eigen::Index>(k)));
    }
    out.active = st.work;
    std::sort(out.active.begin(), out.active.end());
  }
  out.value = 0.5 * out.z.dot(p.H * out.z) + p.f.dot(out.z);
  return out;
}

bool KktReport::acceptable(const QpProblem& p) const {
  return stationarity <= 1e-6 * (1.0 + inf_norm(p.f)) && eq_residual <= 1e-8 && in_violation <= 1e-8 &&
         min_multiplier >= -1e-8 && complementarity <= 1e-6;
}

KktReport kkt_report(const QpProblem& p, const QpSolution& s) {
  KktReport r;
  Vector grad = p.H * s.z + p.f;
  if (p.Aeq.rows() > 0) grad += p.Aeq.transpose() * s.lam_eq;
  if (p.Ain.rows() > 0) grad += p.Ain.transpose() * s.mu_in;
  r.stationarity = inf_norm(grad);
  if (p.Aeq.rows() > 0) r.eq_residual = inf_norm(Vector(p.Aeq * s.z - p.beq));
  if (p.Ain.rows() > 0) {
    const Vector slack = p.Ain * s.z - p.bin;
    r.in_violation = std::max(0.0, slack.maxCoeff());
    r.min_multiplier = s.mu_in.minCoeff();
    r.complementarity = std::abs(s.mu_in.dot(slack));
  }
  return r;
}

}  // namespace dmpc
