#pragma once

// Shared helpers for the test binaries.

#include <filesystem>
#include <string>
#include <vector>

#include "ensprune/core.hpp"
#include "ensprune/loss.hpp"

namespace testing_support {

using namespace ensprune;

inline std::filesystem::path source_dir() { return ENSPRUNE_TEST_SOURCE_DIR; }

/// Random probability rows drawn from a flat Dirichlet.
inline PredictionTensor random_tensor(Rng& rng, std::size_t m, std::size_t n, std::size_t c) {
  PredictionTensor t(m, n, c);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      auto row = t.row(i, k);
      double total = 0.0;
      for (double& v : row) {
        v = rng.exponential();
        total += v;
      }
      for (double& v : row) v /= total;
    }
  }
  return t;
}

inline LabelVector random_labels(Rng& rng, std::size_t n, std::size_t c) {
  std::vector<int> y(n);
  for (int& v : y) v = static_cast<int>(rng.below(c));
  return LabelVector(std::move(y), c);
}

/// Random point on the probability simplex.
inline WeightVector random_simplex(Rng& rng, std::size_t m) {
  WeightVector w(m);
  double total = 0.0;
  for (double& v : w) {
    v = rng.exponential();
    total += v;
  }
  for (double& v : w) v /= total;
  return w;
}

/// Random symmetric positive definite matrix B'B + shift I.
inline Eigen::MatrixXd random_spd(Rng& rng, Eigen::Index n, double shift = 0.5) {
  Eigen::MatrixXd b(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) b(r, c) = rng.normal();
  }
  return b.transpose() * b + shift * Eigen::MatrixXd::Identity(n, n);
}

inline Eigen::VectorXd random_vector(Rng& rng, Eigen::Index n, double scale = 1.0) {
  Eigen::VectorXd v(n);
  for (Eigen::Index k = 0; k < n; ++k) v(k) = scale * rng.normal();
  return v;
}

}  // namespace testing_support
