#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ensprune/conic.hpp"
#include "ensprune/core.hpp"
#include "ensprune/loss.hpp"
#include "ensprune/solver.hpp"

namespace ensprune {

class FitFailed : public Error {
 public:
  explicit FitFailed(SolveStatus status)
      : Error("weight fit failed: solver status " + to_string(status)), status(status) {}
  SolveStatus status;
};

class AllCellsFailed : public Error {
 public:
  using Error::Error;
};

class EmptyEnsemble : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class TooLarge : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct EnsembleData {
  PredictionTensor predictions;
  LabelVector labels;
  SplitSpec split;
};

// ---------------------------------------------------------------------------
// Synthetic ensembles
// ---------------------------------------------------------------------------

struct SyntheticSpec {
  std::size_t num_models = 40;
  std::size_t num_samples = 4000;
  std::size_t num_classes = 10;
  /// Each model's target top-1 accuracy is drawn uniformly from this range.
  double accuracy_low = 0.6;
  double accuracy_high = 0.8;
  /// Weight of the per-sample noise shared by all models, in [0, 1).
  double correlation = 0.5;
  /// Exponent applied to the random simplex draw; larger is more peaked.
  double sharpness = 2.0;
  std::uint64_t seed = 0;
  double train_fraction = 0.6;
  double valid_fraction = 0.2;

  /// Throws InvalidSpec.
  void validate() const;
};

/// Seeded synthetic ensemble.
///
/// Labels are uniform over the classes. Model i hits the true class on a
/// sample when Phi(sqrt(rho) g_n + sqrt(1 - rho) e_in) < a_i, where g_n is a
/// per-sample shock shared by all models, so each model's expected accuracy is
/// exactly a_i while errors are correlated. Wrong votes go to a shared decoy
/// class with probability rho. Probability rows are a mix of a shared and an
/// own Dirichlet(1) draw, raised to `sharpness`, renormalized, and permuted so
/// that the voted class holds the largest entry.
EnsembleData generate_synthetic_ensemble(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// Fitting and pruning
// ---------------------------------------------------------------------------

/// Builds the pruning SOCP from `s`, solves and polishes it, returns the
/// weight block.
/// Throws FitFailed unless the solver reports optimal.
WeightVector fit_weights(const QuadraticSurrogate& s, double alpha, double lambda,
                         bool simplex = false, const SolverSettings& settings = {});

/// Surrogate on `samples`, then the SOCP fit.
WeightVector fit_weights(const PredictionTensor& t, const LabelVector& y, double alpha,
                         double lambda, const WeightVector& anchor, std::optional<double> ridge,
                         std::span<const std::size_t> samples, bool simplex = false,
                         const SolverSettings& settings = {});

/// Smallest lambda for which the unconstrained fit is identically zero:
/// ||alpha q_lin + (1 - alpha) c_div||_inf.
double lambda_max(const QuadraticSurrogate& s, double alpha);

/// Indices with |w_i| >= h, ascending. Never empty: if nothing passes, the
/// single index of largest |w_i| (lowest index on ties) is returned.
IndexList prune_by_threshold(const WeightVector& w, double h);

enum class VoteMode { majority, weighted };

std::string to_string(VoteMode mode);
VoteMode vote_mode_from_string(const std::string& s);

/// Voting over a fixed ensemble; caches each member's argmax labels.
class Voter {
 public:
  explicit Voter(const PredictionTensor& t);

  /// Per sample in `samples`: most common member argmax; ties go to the
  /// lowest class index.
  std::vector<int> majority(std::span<const std::size_t> members,
                            std::span<const std::size_t> samples) const;
  /// Per sample: argmax_j sum_{i in members} w_i p_ij, lowest index on ties.
  std::vector<int> weighted(std::span<const std::size_t> members, const WeightVector& w,
                            std::span<const std::size_t> samples) const;

  std::vector<int> vote(std::span<const std::size_t> members, VoteMode mode,
                        const WeightVector* w, std::span<const std::size_t> samples) const;

 private:
  const PredictionTensor& t_;
  std::vector<int> argmax_;
};

/// Voting over all samples. Throws EmptyEnsemble if `members` is empty and
/// InvalidSpec if weighted mode gets no `w`.
std::vector<int> vote(const PredictionTensor& t, std::span<const std::size_t> members,
                      VoteMode mode, const WeightVector* w = nullptr);

/// Fraction of positions where pred equals truth.
double accuracy(std::span<const int> pred, std::span<const int> truth);

/// Labels of `samples`, in order.
std::vector<int> labels_of(const LabelVector& y, std::span<const std::size_t> samples);

/// Default candidates: 20 evenly spaced quantiles (levels k/19) of |w|.
std::vector<double> default_threshold_candidates(const WeightVector& w);

/// Candidate with the best validation voting accuracy; ties go to the larger
/// threshold.
double auto_threshold(const WeightVector& w, const Voter& voter, const LabelVector& y,
                      std::span<const std::size_t> valid, std::span<const double> candidates,
                      VoteMode mode = VoteMode::majority);
double auto_threshold(const WeightVector& w, const PredictionTensor& t, const LabelVector& y,
                      std::span<const std::size_t> valid, std::span<const double> candidates = {},
                      VoteMode mode = VoteMode::majority);

// ---------------------------------------------------------------------------
// Cross-validation and the end-to-end run
// ---------------------------------------------------------------------------

/// Lambda grid values are used as-is (absolute) or multiplied by
/// lambda_max(surrogate, alpha) for each alpha (relative).
enum class LambdaScale { absolute, relative };

std::string to_string(LambdaScale scale);
LambdaScale lambda_scale_from_string(const std::string& s);

struct PruneConfig {
  std::vector<double> alpha_grid{0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> lambda_grid{0.1, 0.3, 0.5, 0.7, 0.9};
  /// Fixed pruning threshold; nullopt selects it on the validation split.
  std::optional<double> threshold;
  /// Linearization anchor for the diversity term; empty means uniform.
  WeightVector anchor;
  std::optional<double> ridge;
  std::uint64_t seed = 0;
  bool simplex_mode = false;
  VoteMode vote = VoteMode::majority;
  LambdaScale lambda_scale = LambdaScale::relative;
  SolverSettings solver;

  /// Throws InvalidSpec.
  void validate() const;
};

struct GridCell {
  std::size_t alpha_index = 0;
  std::size_t lambda_index = 0;
  double alpha = 0.0;
  double lambda = 0.0;
  double lambda_effective = 0.0;
  bool ok = false;
  std::string status;
  double valid_accuracy = 0.0;
  double threshold = 0.0;
  std::size_t num_selected = 0;
  double l1_norm = 0.0;
  WeightVector weights;
  IndexList selected;

  bool operator==(const GridCell&) const = default;
};

struct CvResult {
  std::size_t best_cell = 0;
  double best_alpha = 0.0;
  double best_lambda = 0.0;
  std::vector<GridCell> cells;  // alpha-major order
};

/// Fits every (alpha, lambda) cell on the train split and scores it by voting
/// accuracy on the validation split after thresholding. Best cell: highest
/// accuracy, then fewest selected models, then smaller lambda index, then
/// smaller alpha index. Cells whose fit fails are kept in the list with
/// ok = false. Throws AllCellsFailed if no cell succeeds.
CvResult cross_validate(const PredictionTensor& t, const LabelVector& y, const SplitSpec& split,
                        const PruneConfig& config);

struct PruneReport {
  std::uint64_t seed = 0;
  std::string vote_mode;
  double best_alpha = 0.0;
  double best_lambda = 0.0;
  double threshold_used = 0.0;
  WeightVector weights;
  IndexList selected;
  double full_accuracy = 0.0;
  double pruned_accuracy = 0.0;
  std::size_t num_models_full = 0;
  std::size_t num_models_pruned = 0;
  std::vector<GridCell> cells;

  bool operator==(const PruneReport&) const = default;
};

/// Grid search, threshold, and test-split evaluation of the full and pruned
/// ensembles. In weighted mode the full ensemble is averaged uniformly.
PruneReport run_pipeline(const EnsembleData& data, const PruneConfig& config);

/// Evaluates an already chosen (alpha, lambda): fit on train, threshold
/// (fixed or on validation), vote on test.
PruneReport prune_with(const EnsembleData& data, const PruneConfig& config, double alpha,
                       double lambda);

struct SubsetOracleResult {
  IndexList subset;
  double loss = 0.0;
  std::size_t subsets_evaluated = 0;
};

inline constexpr std::size_t kOracleMaxModels = 14;

/// Exhaustive search over all non-empty subsets, scoring each by exact_loss
/// with uniform weights over the subset on `samples`. Ties keep the
/// lexicographically smallest subset. Throws TooLarge above max_models
/// (which itself may not exceed kOracleMaxModels).
SubsetOracleResult brute_force_subset_oracle(const PredictionTensor& t, const LabelVector& y,
                                             double alpha, std::span<const std::size_t> samples,
                                             std::size_t max_models = kOracleMaxModels);

/// exact_loss with uniform weights over `subset` (zero elsewhere).
double uniform_subset_loss(const PredictionTensor& t, const LabelVector& y, double alpha,
                           std::span<const std::size_t> subset,
                           std::span<const std::size_t> samples);

}  // namespace ensprune
