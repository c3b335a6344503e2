#include "ensprune/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace ensprune {

namespace {

std::string row_message(std::size_t i, std::size_t n, double sum) {
  std::ostringstream os;
  os.precision(17);
  os << "probability row (model " << i << ", sample " << n << ") sums to " << sum;
  return os.str();
}

std::string range_message(std::size_t i, std::size_t n, std::size_t j, double v) {
  std::ostringstream os;
  os.precision(17);
  os << "probability (model " << i << ", sample " << n << ", class " << j << ") = " << v
     << " is outside [0, 1]";
  return os.str();
}

}  // namespace

RowNotNormalized::RowNotNormalized(std::size_t model, std::size_t sample, double sum)
    : ValidationError(row_message(model, sample, sum)), model(model), sample(sample) {}

OutOfRange::OutOfRange(std::size_t model, std::size_t sample, std::size_t cls, double value)
    : ValidationError(range_message(model, sample, cls, value)),
      model(model),
      sample(sample),
      cls(cls) {}

PredictionTensor::PredictionTensor(std::size_t num_models, std::size_t num_samples,
                                   std::size_t num_classes)
    : num_models_(num_models),
      num_samples_(num_samples),
      num_classes_(num_classes),
      probs_(num_models * num_samples * num_classes, 0.0) {}

PredictionTensor::PredictionTensor(std::size_t num_models, std::size_t num_samples,
                                   std::size_t num_classes, std::vector<double> probs)
    : num_models_(num_models),
      num_samples_(num_samples),
      num_classes_(num_classes),
      probs_(std::move(probs)) {
  if (probs_.size() != num_models * num_samples * num_classes) {
    throw ShapeMismatch("prediction array has " + std::to_string(probs_.size()) +
                        " entries, expected M*N*C = " +
                        std::to_string(num_models * num_samples * num_classes));
  }
}

std::vector<int> PredictionTensor::argmax_table() const {
  std::vector<int> out(num_models_ * num_samples_);
  for (std::size_t i = 0; i < num_models_; ++i) {
    for (std::size_t n = 0; n < num_samples_; ++n) {
      const auto r = row(i, n);
      out[i * num_samples_ + n] =
          static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
    }
  }
  return out;
}

LabelVector::LabelVector(std::vector<int> labels, std::size_t num_classes)
    : labels_(std::move(labels)), num_classes_(num_classes) {
  for (std::size_t n = 0; n < labels_.size(); ++n) {
    if (labels_[n] < 0 || static_cast<std::size_t>(labels_[n]) >= num_classes_) {
      throw ValidationError("label " + std::to_string(labels_[n]) + " at sample " +
                            std::to_string(n) + " is outside [0, " +
                            std::to_string(num_classes_) + ")");
    }
  }
}

void SplitSpec::validate(std::size_t num_samples) const {
  std::vector<char> seen(num_samples, 0);
  for (const IndexList* part : {&train, &valid, &test}) {
    for (std::size_t idx : *part) {
      if (idx >= num_samples) {
        throw ValidationError("split index " + std::to_string(idx) + " is outside [0, " +
                              std::to_string(num_samples) + ")");
      }
      if (seen[idx]) {
        throw ValidationError("split index " + std::to_string(idx) +
                              " appears in more than one split");
      }
      seen[idx] = 1;
    }
  }
}

SplitSpec SplitSpec::contiguous(std::size_t num_samples, double train_fraction,
                                double valid_fraction) {
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * num_samples));
  const auto n_valid = static_cast<std::size_t>(std::floor(valid_fraction * num_samples));
  SplitSpec s;
  for (std::size_t n = 0; n < num_samples; ++n) {
    if (n < n_train) {
      s.train.push_back(n);
    } else if (n < n_train + n_valid) {
      s.valid.push_back(n);
    } else {
      s.test.push_back(n);
    }
  }
  return s;
}

IndexList iota_indices(std::size_t n) {
  IndexList out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = k;
  return out;
}

void validate_tensor(const PredictionTensor& t) {
  const std::size_t m = t.num_models(), n_s = t.num_samples(), c = t.num_classes();
  if (m == 0 || n_s == 0 || c < 2) {
    throw ShapeMismatch("prediction tensor needs M >= 1, N >= 1, C >= 2 (got M=" +
                        std::to_string(m) + ", N=" + std::to_string(n_s) +
                        ", C=" + std::to_string(c) + ")");
  }
  if (t.data().size() != m * n_s * c) {
    throw ShapeMismatch("prediction array size does not match M*N*C");
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t n = 0; n < n_s; ++n) {
      const auto r = t.row(i, n);
      for (std::size_t j = 0; j < c; ++j) {
        if (!(r[j] >= 0.0 && r[j] <= 1.0)) throw OutOfRange(i, n, j, r[j]);
      }
      CompensatedSum s;
      for (double v : r) s.add(v);
      if (std::abs(s.value() - 1.0) > kRowSumTolerance) throw RowNotNormalized(i, n, s.value());
    }
  }
}

void normalize_rows(PredictionTensor& t) {
  validate_tensor(t);
  for (std::size_t i = 0; i < t.num_models(); ++i) {
    for (std::size_t n = 0; n < t.num_samples(); ++n) {
      auto r = t.row(i, n);
      CompensatedSum s;
      for (double v : r) s.add(v);
      const double total = s.value();
      if (total != 1.0) {
        for (double& v : r) v = std::min(1.0, v / total);
      }
    }
  }
}

void check_labels_match(const PredictionTensor& t, const LabelVector& y) {
  if (y.size() != t.num_samples()) {
    throw ShapeMismatch("label vector has " + std::to_string(y.size()) + " entries, tensor has " +
                        std::to_string(t.num_samples()) + " samples");
  }
  if (y.num_classes() != t.num_classes()) {
    throw ShapeMismatch("label vector declares " + std::to_string(y.num_classes()) +
                        " classes, tensor has " + std::to_string(t.num_classes()));
  }
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t sm = seed;
  for (auto& word : s_) word = splitmix64(sm);
}

std::uint64_t Rng::next() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::uniform_open0() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) return 0;
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t r;
  do {
    r = next();
  } while (r >= limit);
  return r % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform_open0();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

double Rng::exponential() { return -std::log(uniform_open0()); }

Rng seeded_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace ensprune
