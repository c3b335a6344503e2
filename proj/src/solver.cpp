#include "ensprune/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>

#include <Eigen/LU>

#include "ensprune/detail/cone_algebra.hpp"

namespace ensprune {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
// Extra iterations after convergence, aiming at kPolishFactor * tolerance.
constexpr int kPolishIters = 4;
constexpr double kPolishFactor = 1e-4;
// Relative certificate residual accepted when the iteration has stalled.
constexpr double kStallCertificate = 1e-4;
}  // namespace

// ---------------------------------------------------------------------------
// Cone algebra
// ---------------------------------------------------------------------------

namespace detail {

Eigen::Index degree(const std::vector<Block>& blocks) {
  Eigen::Index d = 0;
  for (const Block& b : blocks) d += b.soc ? 1 : b.dim;
  return d;
}

Eigen::VectorXd identity(const std::vector<Block>& blocks, Eigen::Index size) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(size);
  for (const Block& b : blocks) {
    if (b.soc) {
      e[b.offset] = 1.0;
    } else {
      e.segment(b.offset, b.dim).setOnes();
    }
  }
  return e;
}

double soc_det(const Eigen::Ref<const Eigen::VectorXd>& u) {
  const double tail = u.tail(u.size() - 1).norm();
  return (u[0] - tail) * (u[0] + tail);
}

bool interior(const std::vector<Block>& blocks, const Eigen::VectorXd& u) {
  for (const Block& b : blocks) {
    const auto seg = u.segment(b.offset, b.dim);
    if (b.soc) {
      if (!(seg[0] > 0.0) || !(soc_det(seg) > 0.0)) return false;
    } else if (!(seg.minCoeff() > 0.0)) {
      return false;
    }
  }
  return true;
}

bool nt_scaling(const std::vector<Block>& blocks, const Eigen::VectorXd& x,
                const Eigen::VectorXd& s, std::vector<Scaling>& out) {
  out.resize(blocks.size());
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const Block& b = blocks[k];
    const Eigen::VectorXd xs = x.segment(b.offset, b.dim);
    const Eigen::VectorXd ss = s.segment(b.offset, b.dim);
    Scaling& sc = out[k];
    if (!b.soc) {
      if (!(xs.minCoeff() > 0.0) || !(ss.minCoeff() > 0.0)) return false;
      sc.diag = (xs.array() / ss.array()).sqrt();
      continue;
    }
    const double xdet = soc_det(xs);
    const double sdet = soc_det(ss);
    if (!(xs[0] > 0.0 && ss[0] > 0.0 && xdet > 0.0 && sdet > 0.0)) return false;
    const double a = std::sqrt(xdet);
    const double bn = std::sqrt(sdet);
    const Eigen::VectorXd xbar = xs / a;
    const Eigen::VectorXd sbar = ss / bn;
    const double gamma = std::sqrt(0.5 * (1.0 + xbar.dot(sbar)));
    Eigen::VectorXd wbar = xbar;
    wbar[0] += sbar[0];
    wbar.tail(b.dim - 1) -= sbar.tail(b.dim - 1);
    wbar /= 2.0 * gamma;
    const double beta = std::sqrt(a / bn);
    Eigen::VectorXd v = wbar;
    v[0] += 1.0;
    v /= std::sqrt(2.0 * (wbar[0] + 1.0));
    Eigen::VectorXd jv = -v;
    jv[0] = v[0];
    sc.W = 2.0 * v * v.transpose();
    sc.W(0, 0) -= 1.0;
    sc.W.diagonal().tail(b.dim - 1).array() += 1.0;
    sc.W *= beta;
    sc.W_inv = 2.0 * jv * jv.transpose();
    sc.W_inv(0, 0) -= 1.0;
    sc.W_inv.diagonal().tail(b.dim - 1).array() += 1.0;
    sc.W_inv /= beta;
  }
  return true;
}

Eigen::VectorXd apply_w(const std::vector<Block>& blocks, const std::vector<Scaling>& sc,
                        const Eigen::VectorXd& v) {
  Eigen::VectorXd out(v.size());
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const Block& b = blocks[k];
    if (b.soc) {
      out.segment(b.offset, b.dim).noalias() = sc[k].W * v.segment(b.offset, b.dim);
    } else {
      out.segment(b.offset, b.dim) = sc[k].diag.cwiseProduct(v.segment(b.offset, b.dim));
    }
  }
  return out;
}

Eigen::VectorXd apply_w_inv(const std::vector<Block>& blocks, const std::vector<Scaling>& sc,
                            const Eigen::VectorXd& v) {
  Eigen::VectorXd out(v.size());
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const Block& b = blocks[k];
    if (b.soc) {
      out.segment(b.offset, b.dim).noalias() = sc[k].W_inv * v.segment(b.offset, b.dim);
    } else {
      out.segment(b.offset, b.dim) = v.segment(b.offset, b.dim).cwiseQuotient(sc[k].diag);
    }
  }
  return out;
}

Eigen::VectorXd jordan_product(const std::vector<Block>& blocks, const Eigen::VectorXd& u,
                               const Eigen::VectorXd& v) {
  Eigen::VectorXd out(u.size());
  for (const Block& b : blocks) {
    const auto us = u.segment(b.offset, b.dim);
    const auto vs = v.segment(b.offset, b.dim);
    if (!b.soc) {
      out.segment(b.offset, b.dim) = us.cwiseProduct(vs);
      continue;
    }
    out[b.offset] = us.dot(vs);
    out.segment(b.offset + 1, b.dim - 1) =
        us[0] * vs.tail(b.dim - 1) + vs[0] * us.tail(b.dim - 1);
  }
  return out;
}

Eigen::VectorXd jordan_divide(const std::vector<Block>& blocks, const Eigen::VectorXd& lambda,
                              const Eigen::VectorXd& w) {
  Eigen::VectorXd out(w.size());
  for (const Block& b : blocks) {
    const auto l = lambda.segment(b.offset, b.dim);
    const auto ws = w.segment(b.offset, b.dim);
    if (!b.soc) {
      out.segment(b.offset, b.dim) = ws.cwiseQuotient(l);
      continue;
    }
    const auto l1 = l.tail(b.dim - 1);
    const auto w1 = ws.tail(b.dim - 1);
    const double x0 = (l[0] * ws[0] - l1.dot(w1)) / soc_det(l);
    out[b.offset] = x0;
    out.segment(b.offset + 1, b.dim - 1) = (w1 - x0 * l1) / l[0];
  }
  return out;
}

double max_step(const std::vector<Block>& blocks, const Eigen::VectorXd& u,
                const Eigen::VectorXd& d) {
  double alpha = std::numeric_limits<double>::infinity();
  for (const Block& b : blocks) {
    const auto us = u.segment(b.offset, b.dim);
    const auto ds = d.segment(b.offset, b.dim);
    if (!b.soc) {
      for (Eigen::Index j = 0; j < b.dim; ++j) {
        if (ds[j] < 0.0) alpha = std::min(alpha, -us[j] / ds[j]);
      }
      continue;
    }
    // f(a) = qa a^2 + 2 qb a + qc, first positive root.
    const auto u1 = us.tail(b.dim - 1);
    const auto d1 = ds.tail(b.dim - 1);
    const double qa = ds[0] * ds[0] - d1.squaredNorm();
    const double qb = us[0] * ds[0] - u1.dot(d1);
    const double qc = soc_det(us);
    double root = std::numeric_limits<double>::infinity();
    if (qa == 0.0) {
      if (qb < 0.0) root = -qc / (2.0 * qb);
    } else {
      const double disc = qb * qb - qa * qc;
      if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        const double q = -(qb + std::copysign(sq, qb));
        for (double r : {q / qa, q != 0.0 ? qc / q : std::numeric_limits<double>::infinity()}) {
          if (r > 0.0) root = std::min(root, r);
        }
      }
    }
    // The head must also stay nonnegative.
    if (ds[0] < 0.0) root = std::min(root, -us[0] / ds[0]);
    alpha = std::min(alpha, root);
  }
  return alpha;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

void SolverSettings::validate() const {
  if (!(tol_gap > 0.0 && tol_primal > 0.0 && tol_dual > 0.0)) {
    throw InvalidSpec("solver tolerances must be positive");
  }
  if (max_iters < 1) throw InvalidSpec("max_iters must be at least 1");
  if (!(step_fraction > 0.0 && step_fraction < 1.0)) {
    throw InvalidSpec("step_fraction must lie in (0, 1)");
  }
  if (!(regularization >= 0.0)) throw InvalidSpec("regularization must be nonnegative");
  if (refinement_steps < 0) throw InvalidSpec("refinement_steps must be nonnegative");
}

namespace {

using detail::Block;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double inf_norm(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

/// Internal form: variables reordered as [cone vars | free vars], rotated
/// cones mapped onto standard second-order cones, empty rows dropped.
struct StandardForm {
  Index n_cone = 0;
  Index n_free = 0;
  std::vector<Block> blocks;
  std::vector<std::size_t> perm;  // internal position -> program variable
  std::vector<Index> rotated;     // internal offsets of rotated blocks
  std::vector<std::size_t> kept_rows;
  MatrixXd A;
  VectorXd b;
  VectorXd c;
  bool trivially_infeasible = false;
};

// (x1, x2, rest) -> ((x1 + x2)/sqrt2, (x1 - x2)/sqrt2, rest); its own inverse.
void rotate_pair(double& a, double& b) {
  const double p = (a + b) * kInvSqrt2;
  const double q = (a - b) * kInvSqrt2;
  a = p;
  b = q;
}

StandardForm to_standard_form(const ConeProgram& p) {
  StandardForm sf;
  Index offset = 0;
  for (const Cone& cone : p.cones) {
    const auto dim = static_cast<Index>(cone.dim());
    const bool soc = cone.kind != ConeKind::nonneg_orthant && dim > 1;
    if (cone.kind == ConeKind::rotated_quadratic) sf.rotated.push_back(offset);
    sf.blocks.push_back({soc, offset, dim});
    sf.perm.insert(sf.perm.end(), cone.var_indices.begin(), cone.var_indices.end());
    offset += dim;
  }
  sf.n_cone = offset;
  sf.perm.insert(sf.perm.end(), p.free_vars.begin(), p.free_vars.end());
  sf.n_free = static_cast<Index>(p.free_vars.size());

  const Index n = sf.n_cone + sf.n_free;
  std::vector<Index> position(p.num_vars);
  for (Index k = 0; k < n; ++k) position[sf.perm[static_cast<std::size_t>(k)]] = k;

  MatrixXd A_full = MatrixXd::Zero(static_cast<Index>(p.num_eqs), n);
  for (const Triplet& t : p.eq_A) {
    A_full(static_cast<Index>(t.row), position[t.col]) += t.value;
  }
  sf.c.resize(n);
  for (Index k = 0; k < n; ++k) sf.c[k] = p.objective[sf.perm[static_cast<std::size_t>(k)]];
  for (Index off : sf.rotated) {
    rotate_pair(sf.c[off], sf.c[off + 1]);
    for (Index r = 0; r < A_full.rows(); ++r) rotate_pair(A_full(r, off), A_full(r, off + 1));
  }

  for (std::size_t r = 0; r < p.num_eqs; ++r) {
    const auto ri = static_cast<Index>(r);
    if (A_full.row(ri).cwiseAbs().maxCoeff() > 0.0) {
      sf.kept_rows.push_back(r);
    } else if (p.eq_b[r] != 0.0) {
      sf.trivially_infeasible = true;
    }
  }
  sf.A.resize(static_cast<Index>(sf.kept_rows.size()), n);
  sf.b.resize(static_cast<Index>(sf.kept_rows.size()));
  for (std::size_t k = 0; k < sf.kept_rows.size(); ++k) {
    sf.A.row(static_cast<Index>(k)) = A_full.row(static_cast<Index>(sf.kept_rows[k]));
    sf.b[static_cast<Index>(k)] = p.eq_b[sf.kept_rows[k]];
  }
  return sf;
}

/// Dense LDL' of a quasi-definite matrix without pivoting. Pivots whose sign
/// disagrees with the expected one (or that are tiny) are replaced by a
/// small value of the expected sign.
class QuasiDefiniteLdl {
 public:
  void factor(MatrixXd K, const VectorXd& signs, double dynamic_reg) {
    const Index n = K.rows();
    for (Index j = 0; j < n; ++j) {
      double d = K(j, j);
      for (Index k = 0; k < j; ++k) d -= K(j, k) * K(j, k) * K(k, k);
      if (signs[j] * d < kPivotFloor) d = signs[j] * dynamic_reg;
      K(j, j) = d;
      // Column j below the diagonal: L(i,j) = (K(i,j) - sum_k L(i,k) D_k L(j,k)) / D_j
      VectorXd ljd(j);
      for (Index k = 0; k < j; ++k) ljd[k] = K(j, k) * K(k, k);
      for (Index i = j + 1; i < n; ++i) {
        K(i, j) = (K(i, j) - K.row(i).head(j).dot(ljd)) / d;
      }
    }
    ld_ = std::move(K);
  }

  bool ok() const { return ld_.allFinite(); }

  VectorXd solve(const VectorXd& rhs) const {
    const Index n = ld_.rows();
    VectorXd x = rhs;
    for (Index i = 0; i < n; ++i) x[i] -= ld_.row(i).head(i).dot(x.head(i));
    for (Index i = 0; i < n; ++i) x[i] /= ld_(i, i);
    for (Index i = n - 1; i >= 0; --i) {
      x[i] -= ld_.col(i).tail(n - 1 - i).dot(x.tail(n - 1 - i));
    }
    return x;
  }

 private:
  static constexpr double kPivotFloor = 1e-13;
  MatrixXd ld_;
};

class InteriorPoint {
 public:
  InteriorPoint(const StandardForm& sf, const SolverSettings& settings)
      : sf_(sf), set_(settings), n_(sf.n_cone + sf.n_free), m_(sf.A.rows()) {}

  ConicSolution run();

 private:
  // KKT ordering: [x_cone | y | x_free].
  void assemble_and_factor();
  void solve_kkt(const VectorXd& r_cone, const VectorXd& r_free, const VectorXd& r_eq,
                 VectorXd& dx, VectorXd& dy) const;
  void emit_trace(int iter, double pobj, double dobj, double gap, double pres, double dres,
                  double step) const;

  const StandardForm& sf_;
  const SolverSettings& set_;
  const Index n_;
  const Index m_;

  VectorXd x_, y_, s_;
  std::vector<detail::Scaling> scaling_;
  MatrixXd kkt_;  // unregularized, for refinement
  QuasiDefiniteLdl ldl_;
  // Used instead of ldl_ when the unpivoted factorization breaks down.
  std::optional<Eigen::PartialPivLU<MatrixXd>> lu_;
};

void InteriorPoint::assemble_and_factor() {
  const Index nk = sf_.n_cone, nf = sf_.n_free;
  const Index dim = nk + m_ + nf;
  kkt_ = MatrixXd::Zero(dim, dim);
  for (std::size_t k = 0; k < sf_.blocks.size(); ++k) {
    const Block& b = sf_.blocks[k];
    if (b.soc) {
      kkt_.block(b.offset, b.offset, b.dim, b.dim).noalias() =
          scaling_[k].W_inv * scaling_[k].W_inv;
    } else {
      kkt_.diagonal().segment(b.offset, b.dim) = scaling_[k].diag.array().square().inverse();
    }
  }
  const auto A_cone = sf_.A.leftCols(nk);
  const auto A_free = sf_.A.rightCols(nf);
  kkt_.block(nk, 0, m_, nk) = A_cone;
  kkt_.block(0, nk, nk, m_) = A_cone.transpose();
  kkt_.block(nk, nk + m_, m_, nf) = A_free;
  kkt_.block(nk + m_, nk, nf, m_) = A_free.transpose();

  VectorXd signs(dim);
  signs.head(nk).setOnes();
  signs.segment(nk, m_).setConstant(-1.0);
  signs.tail(nf).setOnes();

  MatrixXd reg = kkt_;
  reg.diagonal() += set_.regularization * signs;
  ldl_.factor(reg, signs, std::max(set_.regularization, 1e-12));
  lu_.reset();
  if (!ldl_.ok()) lu_.emplace(reg);
}

void InteriorPoint::solve_kkt(const VectorXd& r_cone, const VectorXd& r_free,
                              const VectorXd& r_eq, VectorXd& dx, VectorXd& dy) const {
  const Index nk = sf_.n_cone, nf = sf_.n_free;
  VectorXd rhs(nk + m_ + nf);
  rhs << r_cone, r_eq, r_free;
  auto base = [&](const VectorXd& r) -> VectorXd { return lu_ ? lu_->solve(r) : ldl_.solve(r); };
  VectorXd sol = base(rhs);
  for (int k = 0; k < set_.refinement_steps; ++k) {
    const VectorXd res = rhs - kkt_ * sol;
    if (inf_norm(res) <= 1e-15 * (1.0 + inf_norm(rhs))) break;
    sol += base(res);
  }
  dx.resize(n_);
  dx.head(nk) = sol.head(nk);
  dx.tail(nf) = sol.tail(nf);
  dy = -sol.segment(nk, m_);
}

void InteriorPoint::emit_trace(int iter, double pobj, double dobj, double gap, double pres,
                               double dres, double step) const {
  if (!set_.trace) return;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "iter=%d pobj=%.10e dobj=%.10e gap=%.3e pres=%.3e dres=%.3e step=%.4f\n", iter,
                pobj, dobj, gap, pres, dres, step);
  *set_.trace << buf;
}

ConicSolution InteriorPoint::run() {
  const auto& blocks = sf_.blocks;
  const Index nk = sf_.n_cone;
  const Index nf = sf_.n_free;
  const double nu = static_cast<double>(std::max<Index>(detail::degree(blocks), 1));
  const VectorXd e = detail::identity(blocks, nk);
  const double b_norm = inf_norm(sf_.b);
  const double c_norm = inf_norm(sf_.c);

  x_ = VectorXd::Zero(n_);
  y_ = VectorXd::Zero(m_);
  s_ = VectorXd::Zero(n_);
  x_.head(nk) = (1.0 + b_norm) * e;
  s_.head(nk) = (1.0 + c_norm) * e;

  ConicSolution out;
  out.status = SolveStatus::max_iters;
  std::vector<double> merit_history;
  double last_step = 0.0;

  struct Snapshot {
    VectorXd x, y, s;
    ConicSolution out;
  };
  std::optional<Snapshot> best;
  int polish_iters = 0;
  double pres = 0.0, dres = 0.0, gap = 0.0, pobj = 0.0;
  auto meets = [&](double factor) {
    return pres <= factor * set_.tol_primal * (1.0 + b_norm) &&
           dres <= factor * set_.tol_dual * (1.0 + c_norm) &&
           gap <= factor * set_.tol_gap * (1.0 + std::abs(pobj));
  };

  for (int iter = 0;; ++iter) {
    const VectorXd rp = sf_.b - sf_.A * x_;
    const VectorXd rd = sf_.c - sf_.A.transpose() * y_ - s_;
    gap = x_.head(nk).dot(s_.head(nk));
    pobj = sf_.c.dot(x_);
    const double dobj = sf_.b.dot(y_);
    pres = inf_norm(rp);
    dres = inf_norm(rd);

    out.iterations = iter;
    out.gap = gap;
    out.primal_residual = pres;
    out.dual_residual = dres;
    out.primal_objective = pobj;
    out.dual_objective = dobj;
    emit_trace(iter, pobj, dobj, gap, pres, dres, last_step);

    if (!std::isfinite(gap) || !std::isfinite(pres) || !std::isfinite(dres)) {
      out.status = SolveStatus::numerical;
      break;
    }
    if (meets(1.0)) {
      // Converged. Keep going for a few iterations towards tighter tolerances;
      // the last iterate that met the requested ones is the fallback.
      out.status = SolveStatus::optimal;
      best = {x_, y_, s_, out};
      if (polish_iters >= kPolishIters || meets(kPolishFactor)) break;
      ++polish_iters;
    } else if (polish_iters > 0) {
      break;
    }

    // Certificates: A'y + s = 0 with b'y > 0, or A x = 0 with c'x < 0.
    if (iter > 0 && polish_iters == 0) {
      if (dobj > 0.0) {
        const VectorXd r = sf_.A.transpose() * y_ + s_;
        if (inf_norm(r) <= set_.tol_dual * dobj) {
          out.status = SolveStatus::infeasible;
          break;
        }
      }
      if (pobj < 0.0) {
        if (inf_norm(sf_.A * x_) <= set_.tol_primal * -pobj) {
          out.status = SolveStatus::unbounded;
          break;
        }
      }
    }

    // Stall detection.
    const double merit = std::max({pres / (1.0 + b_norm), dres / (1.0 + c_norm),
                                   gap / (1.0 + std::abs(pobj))});
    merit_history.push_back(merit);
    if (merit_history.size() > 10) {
      const double before = merit_history[merit_history.size() - 11];
      if (merit > (1.0 - 1e-3) * before) {
        const bool primal_stuck = pres / (1.0 + b_norm) > set_.tol_primal;
        const bool dual_stuck = dres / (1.0 + c_norm) > set_.tol_dual;
        // A stalled run is only called infeasible or unbounded when the
        // iterate is close to a certificate; otherwise it is a numerical
        // failure.
        if (primal_stuck && dobj > 0.0 &&
            inf_norm(sf_.A.transpose() * y_ + s_) <= kStallCertificate * dobj) {
          out.status = SolveStatus::infeasible;
          break;
        }
        if (dual_stuck && pobj < 0.0 && inf_norm(sf_.A * x_) <= kStallCertificate * -pobj) {
          out.status = SolveStatus::unbounded;
          break;
        }
        out.status = SolveStatus::numerical;
        break;
      }
    }

    if (iter >= set_.max_iters) {
      out.status = SolveStatus::max_iters;
      break;
    }

    const VectorXd x_cone = x_.head(nk);
    const VectorXd s_cone = s_.head(nk);
    if (!detail::nt_scaling(blocks, x_cone, s_cone, scaling_)) {
      out.status = SolveStatus::numerical;
      break;
    }
    const VectorXd lambda = detail::apply_w_inv(blocks, scaling_, x_cone);
    const VectorXd lambda_sq = detail::jordan_product(blocks, lambda, lambda);
    const double mu = gap / nu;
    assemble_and_factor();

    const VectorXd rd_cone = rd.head(nk);
    const VectorXd rd_free = -rd.tail(nf);

    // Solves for a complementarity target d (scaled coordinates) and returns
    // the scaled directions W^{-1} dx, W ds.
    auto direction = [&](const VectorXd& d, VectorXd& dx, VectorXd& dy, VectorXd& ds,
                         VectorXd& dx_scaled, VectorXd& ds_scaled) {
      const VectorXd w_inv_d = detail::apply_w_inv(blocks, scaling_, d);
      solve_kkt(w_inv_d - rd_cone, rd_free, rp, dx, dy);
      dx_scaled = detail::apply_w_inv(blocks, scaling_, dx.head(nk));
      ds_scaled = d - dx_scaled;
      ds = VectorXd::Zero(n_);
      ds.head(nk) = detail::apply_w_inv(blocks, scaling_, ds_scaled);
    };

    VectorXd dx, dy, ds, dxs, dss;
    direction(-lambda, dx, dy, ds, dxs, dss);
    const double a_aff =
        std::min({1.0, detail::max_step(blocks, lambda, dxs), detail::max_step(blocks, lambda, dss)});
    const double gap_aff = (lambda + a_aff * dxs).dot(lambda + a_aff * dss);
    const double sigma = std::clamp(std::pow(gap_aff / lambda.squaredNorm(), 3.0), 0.0, 1.0);

    const VectorXd target =
        sigma * mu * e - lambda_sq - detail::jordan_product(blocks, dxs, dss);
    direction(detail::jordan_divide(blocks, lambda, target), dx, dy, ds, dxs, dss);
    const double a_max =
        std::min(detail::max_step(blocks, lambda, dxs), detail::max_step(blocks, lambda, dss));
    double step = std::min(1.0, set_.step_fraction * a_max);

    VectorXd x_new = x_ + step * dx;
    VectorXd s_new = s_ + step * ds;
    for (int tries = 0; tries < 30 && !(detail::interior(blocks, x_new.head(nk)) &&
                                        detail::interior(blocks, s_new.head(nk)));
         ++tries) {
      step *= 0.8;
      x_new = x_ + step * dx;
      s_new = s_ + step * ds;
    }
    if (!(step > 1e-14) || !x_new.allFinite() || !s_new.allFinite() || !dy.allFinite()) {
      out.status = SolveStatus::numerical;
      break;
    }
    x_ = std::move(x_new);
    s_ = std::move(s_new);
    y_ += step * dy;
    last_step = step;
  }

  if (best) {
    x_ = best->x;
    y_ = best->y;
    s_ = best->s;
    out = best->out;
  }
  out.x.assign(x_.data(), x_.data() + n_);
  out.y.assign(y_.data(), y_.data() + m_);
  out.s.assign(s_.data(), s_.data() + n_);
  return out;
}

}  // namespace

ConicSolution solve(const ConeProgram& p, const SolverSettings& settings) {
  p.validate();
  settings.validate();
  const StandardForm sf = to_standard_form(p);

  ConicSolution internal;
  if (sf.trivially_infeasible) {
    internal.status = SolveStatus::infeasible;
    internal.x.assign(static_cast<std::size_t>(sf.n_cone + sf.n_free), 0.0);
    internal.s = internal.x;
    internal.y.assign(sf.kept_rows.size(), 0.0);
  } else {
    InteriorPoint ipm(sf, settings);
    internal = ipm.run();
  }

  // Back to program coordinates.
  for (Index off : sf.rotated) {
    rotate_pair(internal.x[static_cast<std::size_t>(off)], internal.x[static_cast<std::size_t>(off + 1)]);
    rotate_pair(internal.s[static_cast<std::size_t>(off)], internal.s[static_cast<std::size_t>(off + 1)]);
  }
  ConicSolution out = internal;
  out.x.assign(p.num_vars, 0.0);
  out.s.assign(p.num_vars, 0.0);
  for (std::size_t k = 0; k < sf.perm.size(); ++k) {
    out.x[sf.perm[k]] = internal.x[k];
    out.s[sf.perm[k]] = internal.s[k];
  }
  out.y.assign(p.num_eqs, 0.0);
  for (std::size_t k = 0; k < sf.kept_rows.size(); ++k) out.y[sf.kept_rows[k]] = internal.y[k];
  return out;
}

KktResiduals kkt_residuals(const ConeProgram& p, const ConicSolution& sol) {
  if (sol.x.size() != p.num_vars || sol.s.size() != p.num_vars || sol.y.size() != p.num_eqs) {
    throw ShapeMismatch("solution dimensions do not match the program");
  }
  KktResiduals r;
  std::vector<double> ax(p.num_eqs, 0.0);
  std::vector<double> aty(p.num_vars, 0.0);
  for (const Triplet& t : p.eq_A) {
    ax[t.row] += t.value * sol.x[t.col];
    aty[t.col] += t.value * sol.y[t.row];
  }
  for (std::size_t i = 0; i < p.num_eqs; ++i) {
    r.primal_residual = std::max(r.primal_residual, std::abs(ax[i] - p.eq_b[i]));
  }
  double xs = 0.0;
  for (std::size_t j = 0; j < p.num_vars; ++j) {
    r.dual_residual = std::max(r.dual_residual, std::abs(aty[j] + sol.s[j] - p.objective[j]));
    xs += sol.x[j] * sol.s[j];
  }
  r.gap = std::abs(xs);

  auto violation = [](ConeKind kind, const std::vector<double>& v) {
    switch (kind) {
      case ConeKind::nonneg_orthant: {
        double worst = 0.0;
        for (double e : v) worst = std::max(worst, -e);
        return worst;
      }
      case ConeKind::quadratic: {
        double tail = 0.0;
        for (std::size_t k = 1; k < v.size(); ++k) tail += v[k] * v[k];
        return std::max(0.0, std::sqrt(tail) - v[0]);
      }
      case ConeKind::rotated_quadratic: {
        // Distance of the rotated point from the standard cone.
        const double a = (v[0] + v[1]) * kInvSqrt2;
        double tail = (v[0] - v[1]) * (v[0] - v[1]) / 2.0;
        for (std::size_t k = 2; k < v.size(); ++k) tail += v[k] * v[k];
        return std::max(0.0, std::sqrt(tail) - a);
      }
    }
    return 0.0;
  };
  std::vector<double> seg;
  for (const Cone& c : p.cones) {
    seg.clear();
    for (std::size_t v : c.var_indices) seg.push_back(sol.x[v]);
    r.primal_cone_violation = std::max(r.primal_cone_violation, violation(c.kind, seg));
    seg.clear();
    for (std::size_t v : c.var_indices) seg.push_back(sol.s[v]);
    r.dual_cone_violation = std::max(r.dual_cone_violation, violation(c.kind, seg));
  }
  for (std::size_t v : p.free_vars) {
    r.dual_cone_violation = std::max(r.dual_cone_violation, std::abs(sol.s[v]));
  }
  return r;
}

}  // namespace ensprune
