#pragma once

// Jordan-algebra helpers for the nonnegative orthant and the second-order
// cone, used by the interior-point solver. Vectors are whole-program cone
// vectors; each Block addresses a contiguous segment.

#include <vector>

#include <Eigen/Dense>

namespace ensprune::detail {

struct Block {
  bool soc = false;  // false: nonnegative orthant segment
  Eigen::Index offset = 0;
  Eigen::Index dim = 0;
};

/// Nesterov-Todd scaling for one block. With primal x and dual s in the
/// interior, W is symmetric and W^{-1} x = W s = lambda.
struct Scaling {
  Eigen::VectorXd diag;  // orthant: W = diag(sqrt(x / s))
  Eigen::MatrixXd W;     // soc
  Eigen::MatrixXd W_inv;
};

/// Number of cone "units": 1 per orthant component, 1 per second-order cone.
Eigen::Index degree(const std::vector<Block>& blocks);

/// e: ones on orthant segments, (1, 0, ..., 0) on second-order segments.
Eigen::VectorXd identity(const std::vector<Block>& blocks, Eigen::Index size);

/// u0^2 - ||u1||^2, factored to limit cancellation.
double soc_det(const Eigen::Ref<const Eigen::VectorXd>& u);

/// Strict interior test.
bool interior(const std::vector<Block>& blocks, const Eigen::VectorXd& u);

/// Returns false if a point is not strictly interior.
bool nt_scaling(const std::vector<Block>& blocks, const Eigen::VectorXd& x,
                const Eigen::VectorXd& s, std::vector<Scaling>& out);

Eigen::VectorXd apply_w(const std::vector<Block>& blocks, const std::vector<Scaling>& sc,
                        const Eigen::VectorXd& v);
Eigen::VectorXd apply_w_inv(const std::vector<Block>& blocks, const std::vector<Scaling>& sc,
                            const Eigen::VectorXd& v);

/// Jordan product u o v.
Eigen::VectorXd jordan_product(const std::vector<Block>& blocks, const Eigen::VectorXd& u,
                               const Eigen::VectorXd& v);

/// Solves lambda o x = w for x.
Eigen::VectorXd jordan_divide(const std::vector<Block>& blocks, const Eigen::VectorXd& lambda,
                              const Eigen::VectorXd& w);

/// Largest alpha such that u + alpha d stays in the cone (u strictly
/// interior). Returns +infinity if unbounded.
double max_step(const std::vector<Block>& blocks, const Eigen::VectorXd& u,
                const Eigen::VectorXd& d);

}  // namespace ensprune::detail
