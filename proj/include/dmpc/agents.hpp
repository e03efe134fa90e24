#pragma once

#include <string>
#include <vector>

#include "dmpc/linalg.hpp"

namespace dmpc {

/// {z : H z <= h}
struct Polyhedron {
  Matrix H;
  Vector h;

  static Polyhedron box(const Vector& lo, const Vector& hi);

  Eigen::Index dim() const { return H.cols(); }
  /// Throws ConfigError on inconsistent dimensions, no rows, or an all-zero
  /// row with a negative bound (trivially empty set).
  void validate() const;
  bool contains(const Vector& z, double tol = 1e-9) const;
  /// min_i (h_i - H_i z); positive iff z is strictly inside.
  double margin(const Vector& z) const;
};

/// Axis-aligned box for the consensus variable. Keeps projection closed-form.
struct BoxSet {
  Vector lo;
  Vector hi;

  Eigen::Index dim() const { return lo.size(); }
  void validate() const;
  bool contains(const Vector& theta, double tol = 0.0) const;
  /// 2^p corners, ordered by the binary expansion of the index (bit j -> hi_j).
  std::vector<Vector> vertices() const;
};

struct LinearAgent {
  std::string name;
  Matrix A;  // n x n
  Matrix B;  // n x m
  Matrix C;  // p x n
  Matrix Q;  // n x n, symmetric positive definite
  Matrix R;  // m x m, symmetric positive definite
  Polyhedron X;
  Polyhedron U;

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index m() const { return B.cols(); }
  Eigen::Index p() const { return C.rows(); }

  /// Dimensional consistency and set validity. Weight definiteness is a
  /// validation-report item, not a construction error.
  void check_dimensions() const;
};

/// x_e(theta) = Ex theta, u_e(theta) = Eu theta.
struct EquilibriumMap {
  Matrix Ex;
  Matrix Eu;
  bool unique = true;

  Vector x_e(const Vector& theta) const { return Ex * theta; }
  Vector u_e(const Vector& theta) const { return Eu * theta; }
};

class NoEquilibriumError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solves [[A-I, B], [C, 0]] [Ex; Eu] = [0; I_p]. A square nonsingular system
/// gives the unique map; a non-square consistent system returns the
/// minimum-norm solution with unique = false. Throws NoEquilibriumError when
/// the system is singular or inconsistent.
EquilibriumMap equilibrium_map(const LinearAgent& agent);

/// (x - x_e)'Q(x - x_e) + (u - u_e)'R(u - u_e)
double stage_cost(const LinearAgent& agent, const Vector& x, const Vector& u, const Vector& theta,
                  const EquilibriumMap& emap);

struct ValidationReport {
  Eigen::Index n = 0;
  int controllability_rank = 0;
  int observability_rank = 0;
  double q_min_eig = 0.0;
  double r_min_eig = 0.0;
  bool controllable = false;
  bool observable = false;
  bool weights_pd = false;
  bool equilibrium_exists = false;
  bool equilibrium_unique = false;
  std::string equilibrium_error;

  bool passed() const;
  /// Empty when passed().
  std::string first_failure() const;
};

ValidationReport validate_agent(const LinearAgent& agent);

struct InteriorReport {
  bool passed = true;
  double min_state_margin = 0.0;
  double min_input_margin = 0.0;
  std::string detail;
};

/// Checks that x_e(theta) and u_e(theta) sit strictly inside X and U (by at
/// least `margin`) at every vertex of the box. Sufficient for the whole box
/// because the equilibrium map is linear and the sets are convex.
InteriorReport check_equilibria_interior(const LinearAgent& agent, const EquilibriumMap& emap,
                                         const BoxSet& box, double margin = 1e-6);

}  // namespace dmpc
