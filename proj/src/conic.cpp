#include "ensprune/conic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <istream>
#include <ostream>
#include <sstream>

namespace ensprune {

std::string to_string(ConeKind kind) {
  switch (kind) {
    case ConeKind::nonneg_orthant:
      return "nonneg_orthant";
    case ConeKind::quadratic:
      return "quadratic";
    case ConeKind::rotated_quadratic:
      return "rotated_quadratic";
  }
  return "unknown";
}

ConeKind cone_kind_from_string(const std::string& s) {
  if (s == "nonneg_orthant") return ConeKind::nonneg_orthant;
  if (s == "quadratic") return ConeKind::quadratic;
  if (s == "rotated_quadratic") return ConeKind::rotated_quadratic;
  throw MalformedProgram("unknown cone kind '" + s + "'");
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::optimal:
      return "optimal";
    case SolveStatus::infeasible:
      return "infeasible";
    case SolveStatus::unbounded:
      return "unbounded";
    case SolveStatus::max_iters:
      return "max_iters";
    case SolveStatus::numerical:
      return "numerical";
  }
  return "unknown";
}

SolveStatus solve_status_from_string(const std::string& s) {
  for (auto st : {SolveStatus::optimal, SolveStatus::infeasible, SolveStatus::unbounded,
                  SolveStatus::max_iters, SolveStatus::numerical}) {
    if (to_string(st) == s) return st;
  }
  throw InvalidSpec("unknown solver status '" + s + "'");
}

bool cone_contains(ConeKind kind, std::span<const double> v, double tol) {
  switch (kind) {
    case ConeKind::nonneg_orthant:
      for (double e : v) {
        if (e < -tol) return false;
      }
      return true;
    case ConeKind::quadratic: {
      if (v.empty()) return false;
      double tail = 0.0;
      for (std::size_t k = 1; k < v.size(); ++k) tail += v[k] * v[k];
      return std::sqrt(tail) <= v[0] + tol;
    }
    case ConeKind::rotated_quadratic: {
      if (v.size() < 3) return false;
      if (v[0] < -tol || v[1] < -tol) return false;
      double tail = 0.0;
      for (std::size_t k = 2; k < v.size(); ++k) tail += v[k] * v[k];
      return tail <= 2.0 * v[0] * v[1] + tol;
    }
  }
  return false;
}

void ConeProgram::validate() const {
  if (objective.size() != num_vars) {
    throw MalformedProgram("objective has " + std::to_string(objective.size()) +
                           " entries for " + std::to_string(num_vars) + " variables");
  }
  if (eq_b.size() != num_eqs) {
    throw MalformedProgram("rhs has " + std::to_string(eq_b.size()) + " entries for " +
                           std::to_string(num_eqs) + " equality rows");
  }
  for (const Triplet& t : eq_A) {
    if (t.row >= num_eqs || t.col >= num_vars) {
      throw MalformedProgram("equality entry (" + std::to_string(t.row) + ", " +
                             std::to_string(t.col) + ") outside the matrix");
    }
    if (!std::isfinite(t.value)) throw MalformedProgram("non-finite equality coefficient");
  }
  for (double v : objective) {
    if (!std::isfinite(v)) throw MalformedProgram("non-finite objective coefficient");
  }
  for (double v : eq_b) {
    if (!std::isfinite(v)) throw MalformedProgram("non-finite rhs entry");
  }
  std::vector<int> owner(num_vars, 0);
  for (const Cone& c : cones) {
    if (c.dim() == 0) throw MalformedProgram("cone with no variables");
    if (c.kind == ConeKind::rotated_quadratic && c.dim() < 3) {
      throw MalformedProgram("rotated quadratic cone needs dimension >= 3");
    }
    for (std::size_t v : c.var_indices) {
      if (v >= num_vars) throw MalformedProgram("cone references variable " + std::to_string(v));
      if (owner[v]++) {
        throw MalformedProgram("variable " + std::to_string(v) + " belongs to two cones");
      }
    }
  }
  IndexList expected_free;
  for (std::size_t v = 0; v < num_vars; ++v) {
    if (!owner[v]) expected_free.push_back(v);
  }
  if (expected_free != free_vars) {
    throw MalformedProgram("free_vars does not match the variables outside all cones");
  }
}

Eigen::MatrixXd ConeProgram::dense_A() const {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(num_eqs),
                                            static_cast<Eigen::Index>(num_vars));
  for (const Triplet& t : eq_A) {
    A(static_cast<Eigen::Index>(t.row), static_cast<Eigen::Index>(t.col)) += t.value;
  }
  return A;
}

// ---------------------------------------------------------------------------

std::size_t ProgramBuilder::add_variables(std::size_t count) {
  const std::size_t first = program_.num_vars;
  program_.num_vars += count;
  program_.objective.resize(program_.num_vars, 0.0);
  return first;
}

std::size_t ProgramBuilder::add_equality(
    const std::vector<std::pair<std::size_t, double>>& terms, double rhs) {
  const std::size_t row = program_.num_eqs++;
  for (const auto& [col, value] : terms) {
    if (value != 0.0) program_.eq_A.push_back({row, col, value});
  }
  program_.eq_b.push_back(rhs);
  return row;
}

void ProgramBuilder::add_cone(ConeKind kind, IndexList vars) {
  program_.cones.push_back({kind, std::move(vars)});
}

void ProgramBuilder::set_cost(std::size_t var, double value) { program_.objective.at(var) = value; }

ConeProgram ProgramBuilder::finish() && {
  std::vector<char> covered(program_.num_vars, 0);
  for (const Cone& c : program_.cones) {
    for (std::size_t v : c.var_indices) {
      if (v < covered.size()) covered[v] = 1;
    }
  }
  program_.free_vars.clear();
  for (std::size_t v = 0; v < program_.num_vars; ++v) {
    if (!covered[v]) program_.free_vars.push_back(v);
  }
  program_.validate();
  return std::move(program_);
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& Q, double ridge) {
  if (Q.rows() != Q.cols()) throw ShapeMismatch("cholesky_lower: matrix is not square");
  const Eigen::Index n = Q.rows();
  const double scale = std::max(1.0, Q.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      if (std::abs(Q(i, j) - Q(j, i)) > 1e-10 * scale) {
        throw DomainError("cholesky_lower: matrix is not symmetric");
      }
    }
  }
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double pivot = Q(j, j) + ridge;
    for (Eigen::Index k = 0; k < j; ++k) pivot -= L(j, k) * L(j, k);
    if (!(pivot > 0.0)) {
      throw NotPositiveDefinite("cholesky_lower: pivot " + std::to_string(j) + " is " +
                                std::to_string(pivot));
    }
    const double d = std::sqrt(pivot);
    L(j, j) = d;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double v = Q(i, j);
      for (Eigen::Index k = 0; k < j; ++k) v -= L(i, k) * L(j, k);
      L(i, j) = v / d;
    }
  }
  return L;
}

// ---------------------------------------------------------------------------

WeightVector PruningProgram::weights(const std::vector<double>& x) const {
  WeightVector w;
  w.reserve(layout.weights.size());
  for (std::size_t idx : layout.weights) w.push_back(x.at(idx));
  return w;
}

namespace {

// Weights solving the stationarity system on `support` with the given signs,
// or nothing if the reduced system is singular.
std::optional<Eigen::VectorXd> reduced_solution(const PruningProgram& pp, const Eigen::MatrixXd& P,
                                                const std::vector<Eigen::Index>& support,
                                                const Eigen::VectorXd& signs) {
  const Eigen::Index m = pp.linear.size();
  const auto k = static_cast<Eigen::Index>(support.size());
  const Eigen::Index dim = pp.simplex ? k + 1 : k;
  if (dim == 0) return Eigen::VectorXd::Zero(m);
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd rhs(dim);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = 0; b < k; ++b) K(a, b) = 2.0 * pp.alpha * P(support[a], support[b]);
    rhs(a) = -(pp.linear(support[a]) + pp.lambda * signs(a));
  }
  if (pp.simplex) {
    // Multiplier of sum x = 1 in the last slot.
    K.block(0, k, k, 1).setOnes();
    K.block(k, 0, 1, k).setOnes();
    rhs(k) = 1.0;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  if (!lu.isInvertible()) return std::nullopt;
  const Eigen::VectorXd sol = lu.solve(rhs);
  if ((K * sol - rhs).lpNorm<Eigen::Infinity>() > 1e-12 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) {
    return std::nullopt;
  }
  Eigen::VectorXd x = Eigen::VectorXd::Zero(m);
  for (Eigen::Index a = 0; a < k; ++a) x(support[a]) = sol(a);
  return x;
}

}  // namespace

ConicSolution PruningProgram::polish(const ConicSolution& sol) const {
  const auto m = static_cast<Eigen::Index>(layout.weights.size());
  if (sol.status != SolveStatus::optimal || !(alpha > 0.0) || linear.size() != m) return sol;
  const Eigen::MatrixXd P = chol * chol.transpose();
  Eigen::VectorXd x0(m);
  for (Eigen::Index i = 0; i < m; ++i) x0(i) = sol.x.at(layout.weights[static_cast<std::size_t>(i)]);

  const double scale = 1.0 + x0.lpNorm<Eigen::Infinity>();
  const double grad_scale = 1.0 + linear.lpNorm<Eigen::Infinity>() + lambda;
  const double kkt_tol = 1e-9 * grad_scale;
  std::vector<std::vector<Eigen::Index>> tried;
  for (double tau = 1e-10; tau <= 1e-3; tau *= 10.0) {
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (std::abs(x0(i)) > tau * scale) support.push_back(i);
    }
    if ((simplex && support.empty()) || std::find(tried.begin(), tried.end(), support) != tried.end()) continue;
    tried.push_back(support);
    Eigen::VectorXd signs(static_cast<Eigen::Index>(support.size()));
    for (std::size_t a = 0; a < support.size(); ++a) signs(static_cast<Eigen::Index>(a)) = x0(support[a]) > 0 ? 1.0 : -1.0;
    if (simplex) signs.setOnes();
    const auto cand = reduced_solution(*this, P, support, signs);
    if (!cand) continue;
    const Eigen::VectorXd& x = *cand;

    // Signs must match, off-support coordinates must satisfy the optimality
    // condition with zero weight.
    bool ok = true;
    for (std::size_t a = 0; a < support.size() && ok; ++a) {
      ok = x(support[a]) * signs(static_cast<Eigen::Index>(a)) > 0.0;
    }
    const Eigen::VectorXd r = 2.0 * alpha * (P * x) + linear;
    if (ok && simplex) {
      // r_i + lambda + nu = 0 on the support; off it, r_i + lambda + nu >= 0.
      const double nu = -(r(support[0]) + lambda);
      for (Eigen::Index i = 0; i < m && ok; ++i) {
        if (x(i) == 0.0) ok = r(i) + lambda + nu >= -kkt_tol;
      }
    } else if (ok) {
      for (Eigen::Index i = 0; i < m && ok; ++i) {
        if (x(i) == 0.0) ok = std::abs(r(i)) <= lambda + kkt_tol;
      }
    }
    if (!ok) continue;

    ConicSolution out = sol;
    const double t = x.dot(P * x);
    const double u = x.lpNorm<1>();
    for (Eigen::Index i = 0; i < m; ++i) {
      out.x[layout.weights[static_cast<std::size_t>(i)]] = x(i);
      if (!layout.abs_bounds.empty()) out.x[layout.abs_bounds[static_cast<std::size_t>(i)]] = std::abs(x(i));
    }
    out.x[layout.epigraph] = t;
    out.x[layout.l1_bound] = u;
    const Eigen::VectorXd z = epigraph_point(chol, x, t, epigraph_scale);
    for (std::size_t k = 0; k < layout.cone_aux.size(); ++k) out.x[layout.cone_aux[k]] = z(static_cast<Eigen::Index>(k));
    out.primal_objective = alpha * t + linear.dot(x) + lambda * u;
    return out;
  }
  return sol;
}

Eigen::VectorXd epigraph_point(const Eigen::MatrixXd& chol, const Eigen::VectorXd& x, double t,
                               double k) {
  const Eigen::Index m = x.size();
  Eigen::VectorXd z(m + 2);
  z[0] = k + t / k;
  z.segment(1, m) = 2.0 * (chol.transpose() * x);
  z[m + 1] = k - t / k;
  return z;
}

PruningProgram build_pruning_socp(const QuadraticSurrogate& s, double alpha, double lambda,
                                  bool simplex) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in [0, 1]");
  if (!(lambda >= 0.0)) throw DomainError("lambda must be nonnegative");
  const std::size_t m = s.size();
  if (m == 0 || static_cast<std::size_t>(s.Q.rows()) != m ||
      static_cast<std::size_t>(s.c_div.size()) != m) {
    throw ShapeMismatch("surrogate dimensions disagree");
  }

  PruningProgram out;
  out.chol = cholesky_lower(s.Q, s.ridge);
  out.linear = alpha * s.q_lin + (1.0 - alpha) * s.c_div;
  out.alpha = alpha;
  out.lambda = lambda;
  out.simplex = simplex;

  const Eigen::MatrixXd& L = out.chol;

  // Diagonal soft-thresholding estimate of the optimal t. Simplex weights are
  // bounded, so the plain form is kept there.
  double t_est = 0.0;
  if (alpha > 0.0 && !simplex) {
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(m); ++i) {
      const double p = L.row(i).squaredNorm();
      const double xi = std::max(std::abs(out.linear[i]) - lambda, 0.0) / (2.0 * alpha * p);
      t_est += p * xi * xi;
    }
  }
  const double scale = std::sqrt(std::max(1.0, t_est));
  out.epigraph_scale = scale;

  ProgramBuilder b;
  PruningLayout& lay = out.layout;
  const std::size_t x0 = b.add_variables(m);
  lay.epigraph = b.add_variable();
  std::size_t abs0 = 0;
  if (!simplex) abs0 = b.add_variables(m);
  lay.l1_bound = b.add_variable();
  const std::size_t z0 = b.add_variables(m + 2);

  for (std::size_t i = 0; i < m; ++i) {
    lay.weights.push_back(x0 + i);
    const auto ii = static_cast<Eigen::Index>(i);
    b.set_cost(x0 + i, out.linear[ii]);
  }
  b.set_cost(lay.epigraph, alpha);
  b.set_cost(lay.l1_bound, lambda);

  // With k = scale: z_0 - t/k = k, z_{1+j} - 2 (L'x)_j = 0, z_{M+1} + t/k = k.
  for (std::size_t k = 0; k < m + 2; ++k) lay.cone_aux.push_back(z0 + k);
  b.add_equality({{z0, 1.0}, {lay.epigraph, -1.0 / scale}}, scale);
  for (std::size_t k = 0; k < m; ++k) {
    std::vector<std::pair<std::size_t, double>> row{{z0 + 1 + k, 1.0}};
    for (std::size_t i = k; i < m; ++i) {
      row.emplace_back(x0 + i, -2.0 * L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
    }
    b.add_equality(row, 0.0);
  }
  b.add_equality({{z0 + m + 1, 1.0}, {lay.epigraph, 1.0 / scale}}, scale);
  b.add_cone(ConeKind::quadratic, lay.cone_aux);

  std::vector<std::pair<std::size_t, double>> l1_row{{lay.l1_bound, -1.0}};
  if (simplex) {
    std::vector<std::pair<std::size_t, double>> sum_row;
    for (std::size_t i = 0; i < m; ++i) {
      l1_row.emplace_back(x0 + i, 1.0);
      sum_row.emplace_back(x0 + i, 1.0);
    }
    b.add_equality(sum_row, 1.0);
    b.add_cone(ConeKind::nonneg_orthant, lay.weights);
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      lay.abs_bounds.push_back(abs0 + i);
      l1_row.emplace_back(abs0 + i, 1.0);
      b.add_cone(ConeKind::quadratic, {abs0 + i, x0 + i});
    }
  }
  b.add_equality(l1_row, 0.0);
  b.add_cone(ConeKind::nonneg_orthant, {lay.epigraph, lay.l1_bound});

  out.program = std::move(b).finish();
  return out;
}

// ---------------------------------------------------------------------------

QpAsSocp qp_to_socp(const Eigen::MatrixXd& Q, const Eigen::VectorXd& a, double beta,
                    const Eigen::MatrixXd& A, const Eigen::VectorXd& b, bool nonneg) {
  const Eigen::Index n = Q.rows();
  if (Q.cols() != n || a.size() != n || (A.rows() > 0 && A.cols() != n) || A.rows() != b.size()) {
    throw ShapeMismatch("qp_to_socp: inconsistent dimensions");
  }
  const Eigen::MatrixXd L = cholesky_lower(Q);
  // L^{-1} a by forward substitution.
  const Eigen::VectorXd l_inv_a = L.triangularView<Eigen::Lower>().solve(a);

  QpAsSocp out;
  out.shift = beta - 0.25 * l_inv_a.squaredNorm();

  ProgramBuilder pb;
  const auto un = static_cast<std::size_t>(n);
  const std::size_t x0 = pb.add_variables(un);
  out.head = pb.add_variable();
  const std::size_t tail0 = pb.add_variables(un);
  for (std::size_t i = 0; i < un; ++i) {
    out.x.push_back(x0 + i);
    out.tail.push_back(tail0 + i);
  }
  pb.set_cost(out.head, 1.0);

  // L'x - ubar = -(1/2) L^{-1} a
  for (Eigen::Index k = 0; k < n; ++k) {
    std::vector<std::pair<std::size_t, double>> row{{tail0 + static_cast<std::size_t>(k), -1.0}};
    for (Eigen::Index i = k; i < n; ++i) row.emplace_back(x0 + static_cast<std::size_t>(i), L(i, k));
    pb.add_equality(row, -0.5 * l_inv_a[k]);
  }
  for (Eigen::Index r = 0; r < A.rows(); ++r) {
    std::vector<std::pair<std::size_t, double>> row;
    for (Eigen::Index i = 0; i < n; ++i) row.emplace_back(x0 + static_cast<std::size_t>(i), A(r, i));
    pb.add_equality(row, b[r]);
  }
  IndexList cone{out.head};
  cone.insert(cone.end(), out.tail.begin(), out.tail.end());
  pb.add_cone(ConeKind::quadratic, std::move(cone));
  if (nonneg) pb.add_cone(ConeKind::nonneg_orthant, out.x);

  out.program = std::move(pb).finish();
  return out;
}

bool AffineCone::contains(const Eigen::VectorXd& x, double tol) const {
  const Eigen::VectorXd v = evaluate(x);
  return cone_contains(ConeKind::quadratic, std::span<const double>(v.data(), v.size()), tol);
}

AffineCone quad_constraint_to_cone(const Eigen::MatrixXd& B, const Eigen::VectorXd& a,
                                   double beta) {
  const Eigen::Index n = a.size();
  if (B.cols() != n) throw ShapeMismatch("quad_constraint_to_cone: B and a disagree");
  const Eigen::Index k = B.rows();
  AffineCone out;
  out.G = Eigen::MatrixXd::Zero(k + 2, n);
  out.g = Eigen::VectorXd::Zero(k + 2);
  out.G.row(0) = -0.5 * a.transpose();
  out.g[0] = 0.5 * (1.0 - beta);
  out.G.middleRows(1, k) = B;
  out.G.row(k + 1) = 0.5 * a.transpose();
  out.g[k + 1] = 0.5 * (beta + 1.0);
  return out;
}

IndexList append_affine_cone(ProgramBuilder& builder, const AffineCone& cone,
                             std::span<const std::size_t> x_vars) {
  if (static_cast<std::size_t>(cone.G.cols()) != x_vars.size()) {
    throw ShapeMismatch("append_affine_cone: variable list does not match G");
  }
  const auto rows = static_cast<std::size_t>(cone.G.rows());
  const std::size_t z0 = builder.add_variables(rows);
  IndexList z;
  for (std::size_t r = 0; r < rows; ++r) {
    z.push_back(z0 + r);
    std::vector<std::pair<std::size_t, double>> row{{z0 + r, 1.0}};
    for (std::size_t i = 0; i < x_vars.size(); ++i) {
      row.emplace_back(x_vars[i], -cone.G(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)));
    }
    builder.add_equality(row, cone.g[static_cast<Eigen::Index>(r)]);
  }
  builder.add_cone(ConeKind::quadratic, z);
  return z;
}

// ---------------------------------------------------------------------------

namespace {

std::string format_real(double v) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(len));
}

class LineReader {
 public:
  explicit LineReader(std::istream& is) : is_(is) {}

  std::istringstream next(const char* expecting) {
    std::string line;
    while (std::getline(is_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      if (line[line.find_first_not_of(" \t")] == '#') continue;
      return std::istringstream(line);
    }
    throw ParseError(std::string("unexpected end of input, expecting ") + expecting, line_no_);
  }

  std::size_t line() const { return line_no_; }

  template <typename T>
  T keyed(const char* key) {
    auto ls = next(key);
    std::string word;
    T value{};
    if (!(ls >> word) || word != key || !(ls >> value)) {
      throw ParseError(std::string("expected '") + key + " <value>'", line_no_);
    }
    return value;
  }

  void keyword(const char* key) {
    auto ls = next(key);
    std::string word;
    if (!(ls >> word) || word != key) throw ParseError(std::string("expected '") + key + "'", line_no_);
  }

  double real(const char* what) {
    auto ls = next(what);
    double v = 0.0;
    if (!(ls >> v)) throw ParseError(std::string("expected a number for ") + what, line_no_);
    return v;
  }

 private:
  std::istream& is_;
  std::size_t line_no_ = 0;
};

}  // namespace

void write_program(std::ostream& os, const ConeProgram& p) {
  os << "coneprog " << kProgramFormatVersion << '\n';
  os << "vars " << p.num_vars << '\n';
  os << "eqs " << p.num_eqs << '\n';
  os << "nnz " << p.eq_A.size() << '\n';
  os << "cones " << p.cones.size() << '\n';
  os << "objective\n";
  for (double v : p.objective) os << format_real(v) << '\n';
  os << "rhs\n";
  for (double v : p.eq_b) os << format_real(v) << '\n';
  os << "triplets\n";
  for (const Triplet& t : p.eq_A) os << t.row << ' ' << t.col << ' ' << format_real(t.value) << '\n';
  for (const Cone& c : p.cones) {
    os << "cone " << to_string(c.kind) << ' ' << c.dim();
    for (std::size_t v : c.var_indices) os << ' ' << v;
    os << '\n';
  }
  os << "end\n";
}

ConeProgram read_program(std::istream& is) {
  LineReader in(is);
  const int version = in.keyed<int>("coneprog");
  if (version != kProgramFormatVersion) {
    throw VersionMismatch("cone program format version " + std::to_string(version) +
                          " is not supported (expected " +
                          std::to_string(kProgramFormatVersion) + ")");
  }
  ConeProgram p;
  p.num_vars = in.keyed<std::size_t>("vars");
  p.num_eqs = in.keyed<std::size_t>("eqs");
  const auto nnz = in.keyed<std::size_t>("nnz");
  const auto num_cones = in.keyed<std::size_t>("cones");

  in.keyword("objective");
  for (std::size_t k = 0; k < p.num_vars; ++k) p.objective.push_back(in.real("objective"));
  in.keyword("rhs");
  for (std::size_t k = 0; k < p.num_eqs; ++k) p.eq_b.push_back(in.real("rhs"));
  in.keyword("triplets");
  for (std::size_t k = 0; k < nnz; ++k) {
    auto ls = in.next("triplet");
    Triplet t;
    if (!(ls >> t.row >> t.col >> t.value)) throw ParseError("malformed triplet", in.line());
    p.eq_A.push_back(t);
  }
  for (std::size_t k = 0; k < num_cones; ++k) {
    auto ls = in.next("cone");
    std::string word, kind;
    std::size_t dim = 0;
    if (!(ls >> word >> kind >> dim) || word != "cone") {
      throw ParseError("expected 'cone <kind> <dim> <indices...>'", in.line());
    }
    Cone c;
    try {
      c.kind = cone_kind_from_string(kind);
    } catch (const MalformedProgram& e) {
      throw ParseError(e.what(), in.line());
    }
    for (std::size_t d = 0; d < dim; ++d) {
      std::size_t idx = 0;
      if (!(ls >> idx)) throw ParseError("cone has fewer indices than its dimension", in.line());
      c.var_indices.push_back(idx);
    }
    p.cones.push_back(std::move(c));
  }
  in.keyword("end");

  std::vector<char> covered(p.num_vars, 0);
  for (const Cone& c : p.cones) {
    for (std::size_t v : c.var_indices) {
      if (v < covered.size()) covered[v] = 1;
    }
  }
  for (std::size_t v = 0; v < p.num_vars; ++v) {
    if (!covered[v]) p.free_vars.push_back(v);
  }
  p.validate();
  return p;
}

}  // namespace ensprune
