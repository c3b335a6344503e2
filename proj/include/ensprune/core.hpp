#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ensprune {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data violates a structural or numeric invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class RowNotNormalized : public ValidationError {
 public:
  RowNotNormalized(std::size_t model, std::size_t sample, double sum);
  std::size_t model;
  std::size_t sample;
};

class OutOfRange : public ValidationError {
 public:
  OutOfRange(std::size_t model, std::size_t sample, std::size_t cls, double value);
  std::size_t model;
  std::size_t sample;
  std::size_t cls;
};

/// Argument outside the mathematical domain of a function (e.g. log of a
/// negative mixture probability).
class DomainError : public Error {
 public:
  using Error::Error;
};

class InvalidSpec : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : ValidationError("line " + std::to_string(line) + ": " + what), line(line) {}
  std::size_t line;
};

class VersionMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Numerics helpers
// ---------------------------------------------------------------------------

inline constexpr double kRowSumTolerance = 1e-9;

/// Neumaier-compensated accumulator. Sums over samples go through this so
/// that results do not depend on how the sample range is partitioned.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Dense M x N x C tensor of class-probability rows, model-major.
/// probs(i, n, j) is the probability model i assigns to class j on sample n.
class PredictionTensor {
 public:
  PredictionTensor() = default;
  /// Zero-filled tensor; callers fill rows before validating.
  PredictionTensor(std::size_t num_models, std::size_t num_samples, std::size_t num_classes);
  /// Takes ownership of `probs`; throws ShapeMismatch on extent mismatch.
  PredictionTensor(std::size_t num_models, std::size_t num_samples, std::size_t num_classes,
                   std::vector<double> probs);

  std::size_t num_models() const { return num_models_; }
  std::size_t num_samples() const { return num_samples_; }
  std::size_t num_classes() const { return num_classes_; }

  double operator()(std::size_t i, std::size_t n, std::size_t j) const {
    return probs_[offset(i, n) + j];
  }
  double& operator()(std::size_t i, std::size_t n, std::size_t j) {
    return probs_[offset(i, n) + j];
  }

  std::span<const double> row(std::size_t i, std::size_t n) const {
    return {probs_.data() + offset(i, n), num_classes_};
  }
  std::span<double> row(std::size_t i, std::size_t n) {
    return {probs_.data() + offset(i, n), num_classes_};
  }

  const std::vector<double>& data() const { return probs_; }

  /// Argmax class of each (model, sample) row, lowest index on ties.
  /// Layout: result[i * N + n].
  std::vector<int> argmax_table() const;

  bool operator==(const PredictionTensor&) const = default;

 private:
  std::size_t offset(std::size_t i, std::size_t n) const {
    return (i * num_samples_ + n) * num_classes_;
  }

  std::size_t num_models_ = 0;
  std::size_t num_samples_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<double> probs_;
};

class LabelVector {
 public:
  LabelVector() = default;
  /// Throws ValidationError if any label is outside [0, num_classes).
  LabelVector(std::vector<int> labels, std::size_t num_classes);

  std::size_t size() const { return labels_.size(); }
  std::size_t num_classes() const { return num_classes_; }
  int operator[](std::size_t n) const { return labels_[n]; }
  const std::vector<int>& labels() const { return labels_; }

  double one_hot(std::size_t n, std::size_t j) const {
    return static_cast<std::size_t>(labels_[n]) == j ? 1.0 : 0.0;
  }

  bool operator==(const LabelVector&) const = default;

 private:
  std::vector<int> labels_;
  std::size_t num_classes_ = 0;
};

/// Ensemble weights, one per model. No sign or simplex constraint.
using WeightVector = std::vector<double>;

using IndexList = std::vector<std::size_t>;

struct SplitSpec {
  IndexList train;
  IndexList valid;
  IndexList test;

  /// Throws ValidationError unless the sets are disjoint and inside [0, n).
  void validate(std::size_t num_samples) const;

  /// Contiguous split by fractions (remaining samples go to test).
  static SplitSpec contiguous(std::size_t num_samples, double train_fraction,
                              double valid_fraction);

  bool operator==(const SplitSpec&) const = default;
};

IndexList iota_indices(std::size_t n);

/// Throws RowNotNormalized, OutOfRange or ShapeMismatch naming the first
/// offending index. Scans in (i, n, j) order.
void validate_tensor(const PredictionTensor& t);

/// Validates and rescales rows whose sums are within kRowSumTolerance of 1.
void normalize_rows(PredictionTensor& t);

void check_labels_match(const PredictionTensor& t, const LabelVector& y);

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

/// xoshiro256** seeded through splitmix64. The algorithm is fixed so that
/// seeded synthetic data is reproducible bit-for-bit across platforms.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  std::uint64_t operator()() { return next(); }
  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return ~std::uint64_t{0}; }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1]; safe to take log of.
  double uniform_open0();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), unbiased (rejection on the top residue).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (second variate cached).
  double normal();
  /// Exponential(1).
  double exponential();

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Rng seeded_rng(std::uint64_t seed);

}  // namespace ensprune
