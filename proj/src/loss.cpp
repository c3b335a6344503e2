#include "ensprune/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ensprune {

namespace {

constexpr double kEntropySlack = 1e-12;
constexpr double kMixtureSlack = 1e-9;

void check_weights(const WeightVector& w, const PredictionTensor& t) {
  if (w.size() != t.num_models()) {
    throw ShapeMismatch("weight vector has " + std::to_string(w.size()) + " entries, ensemble has " +
                        std::to_string(t.num_models()) + " models");
  }
}

void check_samples(std::span<const std::size_t> samples, const PredictionTensor& t) {
  if (samples.empty()) throw ShapeMismatch("sample subset is empty");
  for (std::size_t n : samples) {
    if (n >= t.num_samples()) {
      throw ShapeMismatch("sample index " + std::to_string(n) + " out of range");
    }
  }
}

void mixture_row(const WeightVector& w, const PredictionTensor& t, std::size_t n,
                 std::vector<double>& out) {
  const std::size_t c = t.num_classes();
  out.assign(c, 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto r = t.row(i, n);
    for (std::size_t j = 0; j < c; ++j) out[j] += w[i] * r[j];
  }
}

}  // namespace

double entropy_term(double z) {
  if (!(z >= -kEntropySlack && z <= 1.0 + kEntropySlack)) {
    throw DomainError("entropy_term argument " + std::to_string(z) + " outside [0, 1]");
  }
  if (z <= 0.0) return 0.0;
  return -z * std::log(z);
}

double distribution_entropy(std::span<const double> p) {
  CompensatedSum total;
  for (double v : p) total.add(v);
  if (p.empty() || std::abs(total.value() - 1.0) > kRowSumTolerance) {
    throw DomainError("distribution_entropy: row does not sum to 1");
  }
  CompensatedSum h;
  for (double v : p) h.add(entropy_term(v));
  return h.value();
}

std::vector<double> ensemble_prediction(const WeightVector& w, const PredictionTensor& t,
                                        std::size_t n) {
  check_weights(w, t);
  if (n >= t.num_samples()) throw ShapeMismatch("sample index out of range");
  std::vector<double> out;
  mixture_row(w, t, n, out);
  return out;
}

LossValue exact_loss(const WeightVector& w, const PredictionTensor& t, const LabelVector& y,
                     double alpha) {
  const IndexList all = iota_indices(t.num_samples());
  return exact_loss(w, t, y, alpha, all);
}

LossValue exact_loss(const WeightVector& w, const PredictionTensor& t, const LabelVector& y,
                     double alpha, std::span<const std::size_t> samples) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in [0, 1]");
  check_weights(w, t);
  check_labels_match(t, y);
  check_samples(samples, t);

  const std::size_t c = t.num_classes();
  const double inv_c = 1.0 / static_cast<double>(c);
  CompensatedSum acc_sum, div_sum;
  std::vector<double> mix;
  for (std::size_t n : samples) {
    mixture_row(w, t, n, mix);
    double sq = 0.0;
    double bracket = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double m = mix[j];
      if (m < -kMixtureSlack || m > 1.0 + kMixtureSlack) {
        throw DomainError("ensemble mixture probability " + std::to_string(m) + " at sample " +
                          std::to_string(n) + ", class " + std::to_string(j) +
                          " is outside [0, 1]");
      }
      const double diff = m - y.one_hot(n, j);
      sq += diff * diff;
      double member_entropy = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) member_entropy += w[i] * entropy_term(t(i, n, j));
      bracket += entropy_term(std::clamp(m, 0.0, 1.0)) - member_entropy;
    }
    acc_sum.add(sq * inv_c);
    div_sum.add(1.0 - bracket * inv_c);
  }
  const double count = static_cast<double>(samples.size());
  LossValue v;
  v.alpha = alpha;
  v.accuracy_term = acc_sum.value() / count;
  v.diversity_term = div_sum.value() / count;
  v.total = alpha * v.accuracy_term + (1.0 - alpha) * v.diversity_term;
  return v;
}

Eigen::MatrixXd QuadraticSurrogate::regularized() const {
  Eigen::MatrixXd out = Q;
  out.diagonal().array() += ridge;
  return out;
}

double QuadraticSurrogate::accuracy(const Eigen::VectorXd& w) const {
  return w.dot(Q * w) + q_lin.dot(w) + constant;
}

double QuadraticSurrogate::objective(const Eigen::VectorXd& w, double alpha) const {
  return alpha * (accuracy(w) + ridge * w.squaredNorm()) + (1.0 - alpha) * c_div.dot(w);
}

double default_ridge(const Eigen::MatrixXd& Q) {
  if (Q.rows() == 0) return 0.0;
  return 1e-8 * Q.trace() / static_cast<double>(Q.rows());
}

WeightVector uniform_weights(std::size_t m) {
  return WeightVector(m, 1.0 / static_cast<double>(m));
}

QuadraticSurrogate build_surrogate(const PredictionTensor& t, const LabelVector& y,
                                   const WeightVector& anchor, std::optional<double> ridge) {
  const IndexList all = iota_indices(t.num_samples());
  return build_surrogate(t, y, anchor, ridge, all);
}

QuadraticSurrogate build_surrogate(const PredictionTensor& t, const LabelVector& y,
                                   const WeightVector& anchor, std::optional<double> ridge,
                                   std::span<const std::size_t> samples) {
  check_weights(anchor, t);
  check_labels_match(t, y);
  check_samples(samples, t);
  CompensatedSum anchor_sum;
  for (double a : anchor) anchor_sum.add(a);
  if (std::abs(anchor_sum.value() - 1.0) > kRowSumTolerance) {
    throw DomainError("surrogate anchor must sum to 1");
  }
  if (ridge && *ridge < 0.0) throw DomainError("ridge must be nonnegative");

  const auto m = static_cast<Eigen::Index>(t.num_models());
  const auto c = static_cast<Eigen::Index>(t.num_classes());
  const auto stride = static_cast<Eigen::Index>(t.num_samples() * t.num_classes());
  const double inv_c = 1.0 / static_cast<double>(c);

  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using StridedRows = Eigen::Map<const RowMajor, 0, Eigen::OuterStride<>>;

  std::vector<CompensatedSum> q_acc(static_cast<std::size_t>(m * (m + 1) / 2));
  std::vector<CompensatedSum> lin_acc(static_cast<std::size_t>(m));
  std::vector<CompensatedSum> div_acc(static_cast<std::size_t>(m));
  Eigen::MatrixXd gram(m, m);
  Eigen::VectorXd log_mix(c);
  const Eigen::Map<const Eigen::VectorXd> a(anchor.data(), m);

  for (std::size_t n : samples) {
    const StridedRows p(t.data().data() + n * t.num_classes(), m, c, Eigen::OuterStride<>(stride));
    gram.noalias() = p * p.transpose();
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index l = i; l < m; ++l) q_acc[k++].add(gram(i, l) * inv_c);
    }

    const Eigen::VectorXd mix = p.transpose() * a;
    for (Eigen::Index j = 0; j < c; ++j) {
      if (mix[j] < -kMixtureSlack) {
        throw DomainError("anchor mixture is negative at sample " + std::to_string(n));
      }
      log_mix[j] = std::log(std::max(mix[j], kAnchorLogFloor)) + 1.0;
    }
    const int label = y[n];
    for (Eigen::Index i = 0; i < m; ++i) {
      lin_acc[static_cast<std::size_t>(i)].add(-2.0 * inv_c * p(i, label));
      double g = 0.0;
      for (Eigen::Index j = 0; j < c; ++j) g += log_mix[j] * p(i, j) + entropy_term(p(i, j));
      div_acc[static_cast<std::size_t>(i)].add(g * inv_c);
    }
  }

  const double count = static_cast<double>(samples.size());
  QuadraticSurrogate s;
  s.Q.resize(m, m);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index l = i; l < m; ++l) {
      const double v = q_acc[k++].value() / count;
      s.Q(i, l) = v;
      s.Q(l, i) = v;
    }
  }
  s.q_lin.resize(m);
  s.c_div.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    s.q_lin[i] = lin_acc[static_cast<std::size_t>(i)].value() / count;
    s.c_div[i] = div_acc[static_cast<std::size_t>(i)].value() / count;
  }
  // One-hot targets: (1/C) sum_j f_gt,j^2 is exactly 1/C on every sample.
  s.constant = inv_c;
  s.ridge = ridge ? *ridge : default_ridge(s.Q);
  return s;
}

}  // namespace ensprune
