#pragma once

#include <iosfwd>

#include "ensprune/conic.hpp"

namespace ensprune {

struct SolverSettings {
  double tol_gap = 1e-8;
  double tol_primal = 1e-8;
  double tol_dual = 1e-8;
  int max_iters = 100;
  double step_fraction = 0.99;
  /// Static regularization on both diagonal blocks of the KKT matrix.
  double regularization = 1e-9;
  /// Iterative refinement passes after each KKT solve.
  int refinement_steps = 1;
  /// Per-iteration records are written here when non-null.
  std::ostream* trace = nullptr;

  /// Throws InvalidSpec if a setting is out of range.
  void validate() const;
};

/// Primal-dual path-following interior-point method (Nesterov-Todd scaling,
/// Mehrotra predictor-corrector) for cone programs over orthants, quadratic
/// and rotated quadratic cones.
///
/// Termination at status optimal requires
///   x's <= tol_gap (1 + |c'x|),
///   ||Ax - b||_inf <= tol_primal (1 + ||b||_inf),
///   ||A'y + s - c||_inf <= tol_dual (1 + ||c||_inf).
///
/// Throws MalformedProgram for structurally invalid programs; every other
/// outcome is reported through ConicSolution::status.
ConicSolution solve(const ConeProgram& p, const SolverSettings& settings = {});

struct KktResiduals {
  double gap = 0.0;               // |x's|
  double primal_residual = 0.0;   // ||Ax - b||_inf
  double dual_residual = 0.0;     // ||A'y + s - c||_inf
  double primal_cone_violation = 0.0;
  double dual_cone_violation = 0.0;  // includes |s_j| on free variables
};

/// Recomputes the optimality residuals of `sol` directly from the program
/// data, in absolute terms. Throws ShapeMismatch on size mismatch.
KktResiduals kkt_residuals(const ConeProgram& p, const ConicSolution& sol);

}  // namespace ensprune
