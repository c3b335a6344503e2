#include "ensprune/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ensprune {

// ---------------------------------------------------------------------------
// Synthetic ensembles
// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (num_models < 2) throw InvalidSpec("synthetic ensemble needs at least 2 models");
  if (num_samples < 1) throw InvalidSpec("synthetic ensemble needs at least 1 sample");
  if (num_classes < 2) throw InvalidSpec("synthetic ensemble needs at least 2 classes");
  const double chance = 1.0 / static_cast<double>(num_classes);
  if (!(accuracy_low > chance && accuracy_low <= accuracy_high && accuracy_high < 1.0)) {
    throw InvalidSpec("accuracy range must satisfy 1/C < low <= high < 1");
  }
  if (!(correlation >= 0.0 && correlation < 1.0)) throw InvalidSpec("correlation must lie in [0, 1)");
  if (!(sharpness > 0.0)) throw InvalidSpec("sharpness must be positive");
  if (!(train_fraction > 0.0 && valid_fraction > 0.0 && train_fraction + valid_fraction < 1.0)) {
    throw InvalidSpec("split fractions must be positive and leave room for a test split");
  }
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

void dirichlet_ones(Rng& rng, std::vector<double>& out) {
  double total = 0.0;
  for (double& v : out) {
    v = rng.exponential();
    total += v;
  }
  for (double& v : out) v /= total;
}

std::size_t other_class(Rng& rng, std::size_t num_classes, std::size_t label) {
  const auto k = static_cast<std::size_t>(rng.below(num_classes - 1));
  return k >= label ? k + 1 : k;
}

}  // namespace

EnsembleData generate_synthetic_ensemble(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t m = spec.num_models, n_s = spec.num_samples, c = spec.num_classes;
  const double rho = spec.correlation;
  Rng rng(spec.seed);

  std::vector<int> labels(n_s);
  for (auto& l : labels) l = static_cast<int>(rng.below(c));
  std::vector<double> target(m);
  for (auto& a : target) a = rng.uniform(spec.accuracy_low, spec.accuracy_high);

  std::vector<double> shock(n_s);
  std::vector<std::size_t> decoy(n_s);
  std::vector<double> shared(n_s * c);
  std::vector<double> draw(c);
  for (std::size_t n = 0; n < n_s; ++n) {
    shock[n] = rng.normal();
    decoy[n] = other_class(rng, c, static_cast<std::size_t>(labels[n]));
    dirichlet_ones(rng, draw);
    std::copy(draw.begin(), draw.end(), shared.begin() + static_cast<std::ptrdiff_t>(n * c));
  }

  PredictionTensor t(m, n_s, c);
  const double w_shared = std::sqrt(rho);
  const double w_own = std::sqrt(1.0 - rho);
  std::vector<double> logits(c);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t n = 0; n < n_s; ++n) {
      const auto label = static_cast<std::size_t>(labels[n]);
      const double z = w_shared * shock[n] + w_own * rng.normal();
      std::size_t voted = label;
      if (normal_cdf(z) >= target[i]) {
        voted = rng.uniform() < rho ? decoy[n] : other_class(rng, c, label);
      }
      dirichlet_ones(rng, draw);
      double top = -HUGE_VAL;
      for (std::size_t j = 0; j < c; ++j) {
        const double mix = rho * shared[n * c + j] + (1.0 - rho) * draw[j];
        logits[j] = spec.sharpness * std::log(mix);
        top = std::max(top, logits[j]);
      }
      double total = 0.0;
      auto row = t.row(i, n);
      for (std::size_t j = 0; j < c; ++j) {
        row[j] = std::exp(logits[j] - top);
        total += row[j];
      }
      for (double& v : row) v /= total;
      const auto peak = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      std::swap(row[peak], row[voted]);
    }
  }

  EnsembleData out;
  out.predictions = std::move(t);
  out.labels = LabelVector(std::move(labels), c);
  out.split = SplitSpec::contiguous(n_s, spec.train_fraction, spec.valid_fraction);
  validate_tensor(out.predictions);
  return out;
}

// ---------------------------------------------------------------------------
// Fitting and pruning
// ---------------------------------------------------------------------------

WeightVector fit_weights(const QuadraticSurrogate& s, double alpha, double lambda, bool simplex,
                         const SolverSettings& settings) {
  const PruningProgram prog = build_pruning_socp(s, alpha, lambda, simplex);
  const ConicSolution sol = solve(prog.program, settings);
  if (sol.status != SolveStatus::optimal) throw FitFailed(sol.status);
  return prog.weights(prog.polish(sol).x);
}

WeightVector fit_weights(const PredictionTensor& t, const LabelVector& y, double alpha,
                         double lambda, const WeightVector& anchor, std::optional<double> ridge,
                         std::span<const std::size_t> samples, bool simplex,
                         const SolverSettings& settings) {
  const QuadraticSurrogate s = build_surrogate(t, y, anchor, ridge, samples);
  return fit_weights(s, alpha, lambda, simplex, settings);
}

double lambda_max(const QuadraticSurrogate& s, double alpha) {
  return (alpha * s.q_lin + (1.0 - alpha) * s.c_div).cwiseAbs().maxCoeff();
}

IndexList prune_by_threshold(const WeightVector& w, double h) {
  IndexList out;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (std::abs(w[i]) >= h) out.push_back(i);
  }
  if (out.empty() && !w.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < w.size(); ++i) {
      if (std::abs(w[i]) > std::abs(w[best])) best = i;
    }
    out.push_back(best);
  }
  return out;
}

std::string to_string(VoteMode mode) {
  return mode == VoteMode::majority ? "majority" : "weighted";
}

VoteMode vote_mode_from_string(const std::string& s) {
  if (s == "majority") return VoteMode::majority;
  if (s == "weighted") return VoteMode::weighted;
  throw InvalidSpec("unknown vote mode '" + s + "'");
}

Voter::Voter(const PredictionTensor& t) : t_(t), argmax_(t.argmax_table()) {}

std::vector<int> Voter::majority(std::span<const std::size_t> members,
                                 std::span<const std::size_t> samples) const {
  if (members.empty()) throw EmptyEnsemble("cannot vote with an empty ensemble");
  const std::size_t n_s = t_.num_samples();
  std::vector<int> counts(t_.num_classes());
  std::vector<int> out;
  out.reserve(samples.size());
  for (std::size_t n : samples) {
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i : members) ++counts[static_cast<std::size_t>(argmax_[i * n_s + n])];
    out.push_back(static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin()));
  }
  return out;
}

std::vector<int> Voter::weighted(std::span<const std::size_t> members, const WeightVector& w,
                                 std::span<const std::size_t> samples) const {
  if (members.empty()) throw EmptyEnsemble("cannot vote with an empty ensemble");
  if (w.size() != t_.num_models()) throw ShapeMismatch("weight vector does not match ensemble");
  std::vector<double> score(t_.num_classes());
  std::vector<int> out;
  out.reserve(samples.size());
  for (std::size_t n : samples) {
    std::fill(score.begin(), score.end(), 0.0);
    for (std::size_t i : members) {
      const auto r = t_.row(i, n);
      for (std::size_t j = 0; j < score.size(); ++j) score[j] += w[i] * r[j];
    }
    out.push_back(static_cast<int>(std::max_element(score.begin(), score.end()) - score.begin()));
  }
  return out;
}

std::vector<int> Voter::vote(std::span<const std::size_t> members, VoteMode mode,
                             const WeightVector* w, std::span<const std::size_t> samples) const {
  if (mode == VoteMode::majority) return majority(members, samples);
  if (!w) throw InvalidSpec("weighted voting needs a weight vector");
  return weighted(members, *w, samples);
}

std::vector<int> vote(const PredictionTensor& t, std::span<const std::size_t> members,
                      VoteMode mode, const WeightVector* w) {
  const Voter voter(t);
  const IndexList all = iota_indices(t.num_samples());
  return voter.vote(members, mode, w, all);
}

double accuracy(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw ShapeMismatch("prediction and label lengths differ");
  if (pred.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) hits += pred[k] == truth[k];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

std::vector<int> labels_of(const LabelVector& y, std::span<const std::size_t> samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (std::size_t n : samples) out.push_back(y[n]);
  return out;
}

std::vector<double> default_threshold_candidates(const WeightVector& w) {
  std::vector<double> mags;
  for (double v : w) mags.push_back(std::abs(v));
  std::sort(mags.begin(), mags.end());
  std::vector<double> out;
  if (mags.empty()) return out;
  constexpr int kCount = 20;
  const double last = static_cast<double>(mags.size() - 1);
  for (int k = 0; k < kCount; ++k) {
    const double pos = last * static_cast<double>(k) / (kCount - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, mags.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    out.push_back(mags[lo] + frac * (mags[hi] - mags[lo]));
  }
  return out;
}

double auto_threshold(const WeightVector& w, const Voter& voter, const LabelVector& y,
                      std::span<const std::size_t> valid, std::span<const double> candidates,
                      VoteMode mode) {
  std::vector<double> owned;
  if (candidates.empty()) {
    owned = default_threshold_candidates(w);
    candidates = owned;
  }
  const std::vector<int> truth = labels_of(y, valid);
  double best_h = candidates.front();
  double best_acc = -1.0;
  for (double h : candidates) {
    const IndexList members = prune_by_threshold(w, h);
    const double acc = accuracy(voter.vote(members, mode, &w, valid), truth);
    if (acc > best_acc || (acc == best_acc && h > best_h)) {
      best_acc = acc;
      best_h = h;
    }
  }
  return best_h;
}

double auto_threshold(const WeightVector& w, const PredictionTensor& t, const LabelVector& y,
                      std::span<const std::size_t> valid, std::span<const double> candidates,
                      VoteMode mode) {
  const Voter voter(t);
  return auto_threshold(w, voter, y, valid, candidates, mode);
}

// ---------------------------------------------------------------------------
// Cross-validation and the end-to-end run
// ---------------------------------------------------------------------------

std::string to_string(LambdaScale scale) {
  return scale == LambdaScale::absolute ? "absolute" : "relative";
}

LambdaScale lambda_scale_from_string(const std::string& s) {
  if (s == "absolute") return LambdaScale::absolute;
  if (s == "relative") return LambdaScale::relative;
  throw InvalidSpec("unknown lambda scale '" + s + "'");
}

void PruneConfig::validate() const {
  if (alpha_grid.empty() || lambda_grid.empty()) throw InvalidSpec("grids must be non-empty");
  for (double a : alpha_grid) {
    if (!(a >= 0.0 && a <= 1.0)) throw InvalidSpec("alpha grid values must lie in [0, 1]");
  }
  for (double l : lambda_grid) {
    if (!(l >= 0.0)) throw InvalidSpec("lambda grid values must be nonnegative");
  }
  if (threshold && !(*threshold >= 0.0)) throw InvalidSpec("threshold must be nonnegative");
  if (ridge && !(*ridge >= 0.0)) throw InvalidSpec("ridge must be nonnegative");
  solver.validate();
}

namespace {

QuadraticSurrogate train_surrogate(const EnsembleData& d, const PruneConfig& config) {
  const WeightVector anchor =
      config.anchor.empty() ? uniform_weights(d.predictions.num_models()) : config.anchor;
  return build_surrogate(d.predictions, d.labels, anchor, config.ridge, d.split.train);
}

void check_data(const PredictionTensor& t, const LabelVector& y, const SplitSpec& split) {
  validate_tensor(t);
  check_labels_match(t, y);
  split.validate(t.num_samples());
  if (split.train.empty() || split.valid.empty()) {
    throw ValidationError("train and validation splits must be non-empty");
  }
}

double effective_lambda(const QuadraticSurrogate& s, const PruneConfig& config, double alpha,
                        double lambda) {
  return config.lambda_scale == LambdaScale::relative ? lambda * lambda_max(s, alpha) : lambda;
}

GridCell evaluate_cell(const QuadraticSurrogate& s, const Voter& voter, const LabelVector& y,
                       const SplitSpec& split, const PruneConfig& config, double alpha,
                       double lambda) {
  GridCell cell;
  cell.alpha = alpha;
  cell.lambda = lambda;
  cell.lambda_effective = effective_lambda(s, config, alpha, lambda);
  try {
    cell.weights = fit_weights(s, alpha, cell.lambda_effective, config.simplex_mode, config.solver);
  } catch (const FitFailed& e) {
    cell.status = to_string(e.status);
    return cell;
  }
  cell.ok = true;
  cell.status = "optimal";
  for (double v : cell.weights) cell.l1_norm += std::abs(v);
  cell.threshold = config.threshold
                       ? *config.threshold
                       : auto_threshold(cell.weights, voter, y, split.valid, {}, config.vote);
  cell.selected = prune_by_threshold(cell.weights, cell.threshold);
  cell.num_selected = cell.selected.size();
  cell.valid_accuracy = accuracy(voter.vote(cell.selected, config.vote, &cell.weights, split.valid),
                                 labels_of(y, split.valid));
  return cell;
}

CvResult grid_search(const QuadraticSurrogate& s, const Voter& voter, const LabelVector& y,
                     const SplitSpec& split, const PruneConfig& config) {
  CvResult out;
  for (std::size_t ai = 0; ai < config.alpha_grid.size(); ++ai) {
    for (std::size_t li = 0; li < config.lambda_grid.size(); ++li) {
      GridCell cell = evaluate_cell(s, voter, y, split, config, config.alpha_grid[ai],
                                    config.lambda_grid[li]);
      cell.alpha_index = ai;
      cell.lambda_index = li;
      out.cells.push_back(std::move(cell));
    }
  }
  const GridCell* best = nullptr;
  for (const GridCell& c : out.cells) {
    if (!c.ok) continue;
    const bool better =
        !best || c.valid_accuracy > best->valid_accuracy ||
        (c.valid_accuracy == best->valid_accuracy &&
         (c.num_selected < best->num_selected ||
          (c.num_selected == best->num_selected &&
           (c.lambda_index < best->lambda_index ||
            (c.lambda_index == best->lambda_index && c.alpha_index < best->alpha_index)))));
    if (better) best = &c;
  }
  if (!best) throw AllCellsFailed("every (alpha, lambda) cell failed to fit");
  out.best_cell = static_cast<std::size_t>(best - out.cells.data());
  out.best_alpha = best->alpha;
  out.best_lambda = best->lambda;
  return out;
}

PruneReport make_report(const EnsembleData& d, const PruneConfig& config, const Voter& voter,
                        const GridCell& chosen) {
  const std::size_t m = d.predictions.num_models();
  PruneReport r;
  r.seed = config.seed;
  r.vote_mode = to_string(config.vote);
  r.best_alpha = chosen.alpha;
  r.best_lambda = chosen.lambda;
  r.threshold_used = chosen.threshold;
  r.weights = chosen.weights;
  r.selected = chosen.selected;
  r.num_models_full = m;
  r.num_models_pruned = chosen.selected.size();

  const std::vector<int> truth = labels_of(d.labels, d.split.test);
  const IndexList everyone = iota_indices(m);
  const WeightVector flat = uniform_weights(m);
  r.full_accuracy = accuracy(voter.vote(everyone, config.vote, &flat, d.split.test), truth);
  r.pruned_accuracy =
      accuracy(voter.vote(chosen.selected, config.vote, &chosen.weights, d.split.test), truth);
  return r;
}

}  // namespace

CvResult cross_validate(const PredictionTensor& t, const LabelVector& y, const SplitSpec& split,
                        const PruneConfig& config) {
  config.validate();
  check_data(t, y, split);
  const WeightVector anchor = config.anchor.empty() ? uniform_weights(t.num_models()) : config.anchor;
  const QuadraticSurrogate s = build_surrogate(t, y, anchor, config.ridge, split.train);
  const Voter voter(t);
  return grid_search(s, voter, y, split, config);
}

PruneReport run_pipeline(const EnsembleData& data, const PruneConfig& config) {
  config.validate();
  check_data(data.predictions, data.labels, data.split);
  if (data.split.test.empty()) throw ValidationError("test split must be non-empty");
  const QuadraticSurrogate s = train_surrogate(data, config);
  const Voter voter(data.predictions);
  CvResult cv = grid_search(s, voter, data.labels, data.split, config);
  PruneReport r = make_report(data, config, voter, cv.cells[cv.best_cell]);
  r.cells = std::move(cv.cells);
  return r;
}

PruneReport prune_with(const EnsembleData& data, const PruneConfig& config, double alpha,
                       double lambda) {
  config.validate();
  check_data(data.predictions, data.labels, data.split);
  if (data.split.test.empty()) throw ValidationError("test split must be non-empty");
  const QuadraticSurrogate s = train_surrogate(data, config);
  const Voter voter(data.predictions);
  GridCell cell = evaluate_cell(s, voter, data.labels, data.split, config, alpha, lambda);
  if (!cell.ok) throw FitFailed(solve_status_from_string(cell.status));
  PruneReport r = make_report(data, config, voter, cell);
  r.cells.push_back(std::move(cell));
  return r;
}

double uniform_subset_loss(const PredictionTensor& t, const LabelVector& y, double alpha,
                           std::span<const std::size_t> subset,
                           std::span<const std::size_t> samples) {
  if (subset.empty()) throw EmptyEnsemble("subset is empty");
  WeightVector w(t.num_models(), 0.0);
  const double share = 1.0 / static_cast<double>(subset.size());
  for (std::size_t i : subset) w.at(i) = share;
  return exact_loss(w, t, y, alpha, samples).total;
}

SubsetOracleResult brute_force_subset_oracle(const PredictionTensor& t, const LabelVector& y,
                                             double alpha, std::span<const std::size_t> samples,
                                             std::size_t max_models) {
  const std::size_t m = t.num_models();
  if (max_models > kOracleMaxModels || m > max_models) {
    throw TooLarge("subset oracle is limited to " + std::to_string(std::min(max_models, kOracleMaxModels)) +
                   " models (got " + std::to_string(m) + ")");
  }
  SubsetOracleResult best;
  best.loss = HUGE_VAL;
  IndexList subset;
  for (std::uint32_t mask = 1; mask < (1u << m); ++mask) {
    subset.clear();
    for (std::size_t i = 0; i < m; ++i) {
      if (mask & (1u << i)) subset.push_back(i);
    }
    const double loss = uniform_subset_loss(t, y, alpha, subset, samples);
    ++best.subsets_evaluated;
    if (loss < best.loss || (loss == best.loss && subset < best.subset)) {
      best.loss = loss;
      best.subset = subset;
    }
  }
  return best;
}

}  // namespace ensprune
