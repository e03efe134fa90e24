#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Malformed input: dimension mismatch, non-PSD Hessian, invalid sets.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SingularMatrixError : public std::runtime_error {
 public:
  explicit SingularMatrixError(double rcond)
      : std::runtime_error("singular matrix (rcond " + std::to_string(rcond) + ")"), rcond_(rcond) {}
  double rcond() const { return rcond_; }

 private:
  double rcond_;
};

/// Condition number above which solve_linear reports a singular system.
inline constexpr double kSingularCondition = 1e12;

/// Solves M X = rhs for square M. Throws SingularMatrixError when the
/// estimated condition number exceeds kSingularCondition.
Matrix solve_linear(const Matrix& M, const Matrix& rhs);

/// Number of singular values above rel_tol * sigma_max.
int numerical_rank(const Matrix& M, double rel_tol = 1e-9);

/// Symmetric PSD square root via eigendecomposition (negative noise clipped).
Matrix symmetric_sqrt(const Matrix& S);

double min_eigenvalue(const Matrix& S);
double max_abs_eigenvalue(const Matrix& S);

bool is_symmetric(const Matrix& S, double tol);

inline double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }
inline double inf_norm(const Matrix& M) { return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff(); }

/// Row-major nested initializer helper used by tests and scenario builders.
Matrix make_matrix(std::initializer_list<std::initializer_list<double>> rows);
Vector make_vector(std::initializer_list<double> values);

}  // namespace dmpc
