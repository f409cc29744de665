#pragma once

// Maximization of weighted trace objectives
//
//   F(V) = 1/2 sum_k tr(B_k V^T S_k V)
//
// over the Stiefel manifold, by curvilinear search along the Cayley
// transform with Barzilai-Borwein step seeding and Armijo backtracking.

#include "covshare/model.hpp"

#include <optional>
#include <vector>

namespace covshare {

struct TraceTerm {
  Matrix scatter;                // p x p symmetric
  Matrix weight;                 // s x s symmetric
  std::optional<Matrix> factor;  // optional n x p with factor^T factor == scatter
};

class TraceObjective {
 public:
  TraceObjective() = default;

  void add_term(Matrix scatter, Matrix weight, std::optional<Matrix> factor = std::nullopt);

  const std::vector<TraceTerm>& terms() const { return terms_; }
  Index p() const { return p_; }
  Index s() const { return s_; }

  double value(const Eigen::Ref<const Matrix>& v) const;
  /// sum_k 1/2 tr(B_k V^T S_k V) accumulated term by term through V^T S_k V.
  double value_by_traces(const Eigen::Ref<const Matrix>& v) const;
  /// Euclidean gradient sum_k S_k V B_k.
  Matrix gradient(const Eigen::Ref<const Matrix>& v) const;
  /// Value and gradient sharing the S_k V products.
  double value_and_gradient(const Eigen::Ref<const Matrix>& v, Matrix& grad) const;

  /// True when every weight matrix is (numerically) zero.
  bool is_flat() const;

 private:
  Matrix scatter_times(const TraceTerm& term, const Eigen::Ref<const Matrix>& v) const;

  std::vector<TraceTerm> terms_;
  Index p_ = 0;
  Index s_ = 0;
};

struct OptimizerOptions {
  int max_iters = 500;
  double grad_tol = 1e-6;  // relative: stop when ||grad_R||_F <= grad_tol * (1 + |F|)
  double step_init = 1e-2;
  double armijo_c = 1e-4;
  int max_backtracks = 40;

  void validate() const;
};

struct MaximizeResult {
  SubspaceBasis v;
  std::vector<double> trace;  // objective at the start and after each accepted step
  int iterations = 0;
  bool converged = false;
};

Matrix euclidean_gradient(const TraceObjective& obj, const SubspaceBasis& v);

/// Riemannian gradient G - V G^T V (canonical metric).
Matrix riemannian_gradient(const Eigen::Ref<const Matrix>& v, const Eigen::Ref<const Matrix>& grad);

/// (I + tau/2 W)^{-1} (I - tau/2 W) V with W = G V^T - V G^T, evaluated through
/// a 2s x 2s solve. Returns nullopt when that system is singular.
std::optional<SubspaceBasis> cayley_step(const SubspaceBasis& v, const Eigen::Ref<const Matrix>& grad,
                                         double tau);

MaximizeResult maximize(const TraceObjective& obj, const SubspaceBasis& v0,
                        const OptimizerOptions& opts = {});

}  // namespace covshare
