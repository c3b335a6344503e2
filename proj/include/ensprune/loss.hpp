#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ensprune/core.hpp"

namespace ensprune {

/// -z ln z with the continuous extension 0 at z = 0. Natural log.
/// Throws DomainError if z is outside [0, 1] by more than 1e-12.
double entropy_term(double z);

/// Shannon entropy of a probability row, in nats.
double distribution_entropy(std::span<const double> p);

/// Weighted sum of the members' rows for sample n. Not renormalized.
std::vector<double> ensemble_prediction(const WeightVector& w, const PredictionTensor& t,
                                        std::size_t n);

struct LossValue {
  double total = 0.0;
  double accuracy_term = 0.0;
  double diversity_term = 0.0;
  double alpha = 0.0;
};

/// Ensemble loss
///
///   alpha * mean_n (1/C) sum_j (f_ens,j - f_gt,j)^2
///   + (1 - alpha) * mean_n [1 - (1/C) sum_j (H(sum_i w_i p_ij) - sum_i w_i H(p_ij))]
///
/// evaluated on the given samples (all samples when omitted). The mixture
/// sum_i w_i p_ij must stay inside [0, 1] (1e-9 slack) or DomainError is
/// thrown; weights off the simplex can violate this.
LossValue exact_loss(const WeightVector& w, const PredictionTensor& t, const LabelVector& y,
                     double alpha);
LossValue exact_loss(const WeightVector& w, const PredictionTensor& t, const LabelVector& y,
                     double alpha, std::span<const std::size_t> samples);

/// Convex quadratic model of the ensemble loss in the weights.
///
/// The accuracy term is exactly w'Qw + q_lin'w + constant. The diversity term
/// is replaced by its tangent c_div'w at the anchor (the constant offset is
/// dropped). Q is stored without the ridge; regularized() adds it.
struct QuadraticSurrogate {
  Eigen::MatrixXd Q;
  Eigen::VectorXd q_lin;
  Eigen::VectorXd c_div;
  double constant = 0.0;
  double ridge = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(q_lin.size()); }
  Eigen::MatrixXd regularized() const;
  double accuracy(const Eigen::VectorXd& w) const;
  /// alpha * (w'(Q + ridge I)w + q_lin'w + constant) + (1 - alpha) c_div'w
  double objective(const Eigen::VectorXd& w, double alpha) const;
};

inline constexpr double kAnchorLogFloor = 1e-12;

/// 1e-8 * trace(Q) / M.
double default_ridge(const Eigen::MatrixXd& Q);

/// Builds the surrogate from the given samples (all samples when omitted).
/// `anchor` must sum to 1; `ridge` defaults to default_ridge(Q).
QuadraticSurrogate build_surrogate(const PredictionTensor& t, const LabelVector& y,
                                   const WeightVector& anchor,
                                   std::optional<double> ridge = std::nullopt);
QuadraticSurrogate build_surrogate(const PredictionTensor& t, const LabelVector& y,
                                   const WeightVector& anchor, std::optional<double> ridge,
                                   std::span<const std::size_t> samples);

WeightVector uniform_weights(std::size_t m);

}  // namespace ensprune
