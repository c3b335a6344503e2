#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ensprune/core.hpp"
#include "ensprune/loss.hpp"

namespace ensprune {

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

class MalformedProgram : public Error {
 public:
  using Error::Error;
};

enum class ConeKind { nonneg_orthant, quadratic, rotated_quadratic };

std::string to_string(ConeKind kind);
ConeKind cone_kind_from_string(const std::string& s);

/// Membership of a group of program variables in a cone.
///
/// quadratic:          v[0] >= ||v[1:]||_2                 (dim >= 1)
/// rotated_quadratic:  2 v[0] v[1] >= ||v[2:]||^2, v[0], v[1] >= 0   (dim >= 3)
/// nonneg_orthant:     every entry >= 0
struct Cone {
  ConeKind kind = ConeKind::nonneg_orthant;
  IndexList var_indices;

  std::size_t dim() const { return var_indices.size(); }
  bool operator==(const Cone&) const = default;
};

/// True if v lies in the cone, allowing `tol` of absolute slack.
bool cone_contains(ConeKind kind, std::span<const double> v, double tol = 0.0);

struct Triplet {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;
  bool operator==(const Triplet&) const = default;
};

/// minimize objective'x  s.t.  eq_A x = eq_b,  x restricted to the cones.
/// Variables not covered by any cone are listed in free_vars.
struct ConeProgram {
  std::size_t num_vars = 0;
  std::vector<double> objective;
  std::size_t num_eqs = 0;
  std::vector<Triplet> eq_A;
  std::vector<double> eq_b;
  std::vector<Cone> cones;
  IndexList free_vars;

  /// Throws MalformedProgram on any structural violation.
  void validate() const;

  Eigen::MatrixXd dense_A() const;

  bool operator==(const ConeProgram&) const = default;
};

enum class SolveStatus { optimal, infeasible, unbounded, max_iters, numerical };

std::string to_string(SolveStatus status);
/// Throws InvalidSpec on an unknown name.
SolveStatus solve_status_from_string(const std::string& s);

struct ConicSolution {
  std::vector<double> x;
  std::vector<double> y;  // equality multipliers
  std::vector<double> s;  // dual cone slacks, zero on free variables
  SolveStatus status = SolveStatus::numerical;
  int iterations = 0;
  double gap = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
};

/// Incremental construction of a ConeProgram.
class ProgramBuilder {
 public:
  /// Appends `count` variables, returns the index of the first one.
  std::size_t add_variables(std::size_t count);
  std::size_t add_variable() { return add_variables(1); }
  /// Appends the row sum_k coef_k x_{idx_k} = rhs; returns the row index.
  std::size_t add_equality(const std::vector<std::pair<std::size_t, double>>& terms, double rhs);
  void add_cone(ConeKind kind, IndexList vars);
  void set_cost(std::size_t var, double value);
  std::size_t num_vars() const { return program_.num_vars; }

  /// Derives free_vars and validates.
  ConeProgram finish() &&;

 private:
  ConeProgram program_;
};

// ---------------------------------------------------------------------------
// Cholesky
// ---------------------------------------------------------------------------

/// Lower-triangular L with Q + ridge I = L L'. Throws NotPositiveDefinite if a
/// pivot is not positive, DomainError if Q is not symmetric to 1e-10.
Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& Q, double ridge = 0.0);

// ---------------------------------------------------------------------------
// Pruning program
// ---------------------------------------------------------------------------

/// Locations of the pruning program's variables.
struct PruningLayout {
  IndexList weights;      // x
  std::size_t epigraph;   // t
  IndexList abs_bounds;   // u_abs, |x_i| <= u_abs_i (empty in simplex mode)
  std::size_t l1_bound;   // u = sum u_abs_i
  IndexList cone_aux;     // z = (k + t/k, 2 L'x, k - t/k)
};

struct PruningProgram {
  ConeProgram program;
  PruningLayout layout;
  Eigen::MatrixXd chol;  // lower factor of Q + ridge I
  Eigen::VectorXd linear;  // alpha q_lin + (1 - alpha) c_div
  double alpha = 1.0;
  double lambda = 0.0;
  bool simplex = false;
  double epigraph_scale = 1.0;  // k in the epigraph cone

  /// Weight coordinates of a solution vector.
  WeightVector weights(const std::vector<double>& x) const;

  /// Refines an optimal interior point solution by guessing the support and
  /// signs of the weights and solving the reduced stationarity system
  /// exactly. The refined point replaces the primal part of `sol` only if it
  /// passes a full optimality check; otherwise `sol` is returned unchanged.
  /// The dual part is never touched.
  ConicSolution polish(const ConicSolution& sol) const;
};

/// Builds
///
///   min  alpha t + (alpha q_lin + (1 - alpha) c_div)'x + lambda u
///   s.t. (k + t/k, 2 L'x, k - t/k) in Q^{M+2},  (u_abs_i, x_i) in Q^2,
///        sum_i u_abs_i = u,  t >= 0,  u >= 0
///
/// where L L' = Q + ridge I. For any k > 0 the cone condition is
/// ||L'x||^2 <= t. k is 1 unless a diagonal estimate of the optimal t exceeds
/// one (never in simplex mode), in which case k is its square root; this keeps the two ends of the
/// cone vector from cancelling when the weights are large. The epigraph
/// vector is a block of auxiliary variables tied to (t, x) by equality rows.
///
/// With `simplex` set, the weights are restricted to the probability simplex
/// (x >= 0, sum x = 1) and the absolute-value cones are dropped (u = sum x).
PruningProgram build_pruning_socp(const QuadraticSurrogate& s, double alpha, double lambda,
                                  bool simplex = false);

/// The epigraph cone vector (k + t/k, 2 L'x, k - t/k).
Eigen::VectorXd epigraph_point(const Eigen::MatrixXd& chol, const Eigen::VectorXd& x, double t,
                               double k = 1.0);

// ---------------------------------------------------------------------------
// Quadratic programs as cone programs
// ---------------------------------------------------------------------------

/// SOCP form of  min x'Qx + a'x + beta  s.t.  A x = b  (and x >= 0 if `nonneg`).
///
/// With Q = L L', the program is  min u0  s.t.  L'x - ubar = -(1/2) L^{-1} a,
/// A x = b, (u0, ubar) in Q^{n+1}. The QP optimum is u0*^2 + shift with
/// shift = beta - (1/4) a'Q^{-1}a.
struct QpAsSocp {
  ConeProgram program;
  double shift = 0.0;
  IndexList x;
  std::size_t head = 0;
  IndexList tail;

  double qp_value(double u0) const { return u0 * u0 + shift; }
};

QpAsSocp qp_to_socp(const Eigen::MatrixXd& Q, const Eigen::VectorXd& a, double beta,
                    const Eigen::MatrixXd& A, const Eigen::VectorXd& b, bool nonneg = true);

/// Affine image G x + g constrained to a quadratic cone.
struct AffineCone {
  Eigen::MatrixXd G;
  Eigen::VectorXd g;

  Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const { return G * x + g; }
  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const;
};

/// Cone form of  x'B'Bx + a'x + beta <= 0:
///   u0 = (1 - a'x - beta) / 2,  ubar = (B x, (a'x + beta + 1) / 2),  (u0, ubar) in Q^{k+2}.
AffineCone quad_constraint_to_cone(const Eigen::MatrixXd& B, const Eigen::VectorXd& a,
                                   double beta);

/// Adds variables z = G x + g (via equality rows) and the cone membership of z.
/// Returns the indices of z.
IndexList append_affine_cone(ProgramBuilder& builder, const AffineCone& cone,
                             std::span<const std::size_t> x_vars);

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

inline constexpr int kProgramFormatVersion = 1;

/// Newline-delimited, versioned problem format:
///
///   coneprog <version>
///   vars <n>
///   eqs <p>
///   nnz <k>
///   cones <r>
///   objective        followed by n lines, one coefficient each
///   rhs              followed by p lines
///   triplets         followed by k lines "row col value"
///   cone <kind> <dim> <idx...>     r times
///   end
///
/// Reals are written with 17 significant digits.
void write_program(std::ostream& os, const ConeProgram& p);
ConeProgram read_program(std::istream& is);

}  // namespace ensprune
