#include "dmpc/linalg.hpp"

#include <cmath>

namespace dmpc {

Matrix solve_linear(const Matrix& M, const Matrix& rhs) {
  if (M.rows() != M.cols()) throw ConfigError("solve_linear: matrix is not square");
  if (rhs.rows() != M.rows()) throw ConfigError("solve_linear: rhs row count mismatch");
  if (M.rows() == 0) return Matrix(0, rhs.cols());

  Eigen::PartialPivLU<Matrix> lu(M);
  const double rcond = lu.rcond();
  if (!std::isfinite(rcond) || rcond < 1.0 / kSingularCondition) throw SingularMatrixError(rcond);

  Matrix X = lu.solve(rhs);
  // one step of iterative refinement keeps the residual at roundoff level
  Matrix residual = rhs - M * X;
  X += lu.solve(residual);
  if (!X.allFinite()) throw SingularMatrixError(rcond);
  return X;
}

int numerical_rank(const Matrix& M, double rel_tol) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(M);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > rel_tol * s(0)) ++rank;
  return rank;
}

Matrix symmetric_sqrt(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

double min_eigenvalue(const Matrix& S) {
  if (S.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_abs_eigenvalue(const Matrix& S) {
  if (S.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

bool is_symmetric(const Matrix& S, double tol) {
  if (S.rows() != S.cols()) return false;
  return S.size() == 0 || (S - S.transpose()).cwiseAbs().maxCoeff() <= tol;
}

Matrix make_matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index c = r == 0 ? 0 : static_cast<Eigen::Index>(rows.begin()->size());
  Matrix M(r, c);
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    if (static_cast<Eigen::Index>(row.size()) != c) throw ConfigError("make_matrix: ragged rows");
    Eigen::Index j = 0;
    for (double v : row) M(i, j++) = v;
    ++i;
  }
  return M;
}

Vector make_vector(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

}  // namespace dmpc
