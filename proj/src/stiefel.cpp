#include "covshare/stiefel.hpp"

#include "covshare/error.hpp"

#include <algorithm>
#include <cmath>

namespace covshare {

void TraceObjective::add_term(Matrix scatter, Matrix weight, std::optional<Matrix> factor) {
  if (scatter.rows() != scatter.cols() || weight.rows() != weight.cols())
    fail(ErrorKind::dimension_mismatch, "trace objective terms must be square");
  if (terms_.empty()) {
    p_ = scatter.rows();
    s_ = weight.rows();
  } else if (scatter.rows() != p_ || weight.rows() != s_) {
    fail(ErrorKind::dimension_mismatch, "trace objective terms disagree on dimensions");
  }
  const double wscale = std::max(1.0, weight.cwiseAbs().maxCoeff());
  if ((weight - weight.transpose()).cwiseAbs().maxCoeff() > 1e-10 * wscale)
    fail(ErrorKind::invalid_input, "weight matrix must be symmetric");
  if (factor && factor->cols() != p_)
    fail(ErrorKind::dimension_mismatch, "scatter factor must have p columns");
  TraceTerm t{std::move(scatter), 0.5 * (weight + weight.transpose()), std::move(factor)};
  terms_.push_back(std::move(t));
}

Matrix TraceObjective::scatter_times(const TraceTerm& term, const Eigen::Ref<const Matrix>& v) const {
  if (term.factor && term.factor->rows() < term.factor->cols())
    return term.factor->transpose() * (*term.factor * v);
  return term.scatter * v;
}

double TraceObjective::value(const Eigen::Ref<const Matrix>& v) const {
  double f = 0.0;
  for (const auto& t : terms_) {
    const Matrix sv = scatter_times(t, v);
    f += 0.5 * (t.weight.cwiseProduct(v.transpose() * sv)).sum();
  }
  return f;
}

double TraceObjective::value_by_traces(const Eigen::Ref<const Matrix>& v) const {
  double f = 0.0;
  for (const auto& t : terms_) {
    const Matrix vsv = v.transpose() * t.scatter * v;
    f += 0.5 * (t.weight * vsv).trace();
  }
  return f;
}

Matrix TraceObjective::gradient(const Eigen::Ref<const Matrix>& v) const {
  Matrix g;
  value_and_gradient(v, g);
  return g;
}

double TraceObjective::value_and_gradient(const Eigen::Ref<const Matrix>& v, Matrix& grad) const {
  grad = Matrix::Zero(v.rows(), v.cols());
  double f = 0.0;
  for (const auto& t : terms_) {
    const Matrix sv = scatter_times(t, v);
    f += 0.5 * (t.weight.cwiseProduct(v.transpose() * sv)).sum();
    grad.noalias() += sv * t.weight;
  }
  return f;
}

bool TraceObjective::is_flat() const {
  return std::all_of(terms_.begin(), terms_.end(),
                     [](const TraceTerm& t) { return t.weight.cwiseAbs().maxCoeff() <= 1e-300; });
}

void OptimizerOptions::validate() const {
  if (max_iters < 0 || !(grad_tol > 0) || !(step_init > 0) || max_backtracks < 1)
    fail(ErrorKind::invalid_input, "optimizer options must be positive");
  if (!(armijo_c > 0 && armijo_c < 1)) fail(ErrorKind::invalid_input, "armijo_c must lie in (0, 1)");
}

Matrix euclidean_gradient(const TraceObjective& obj, const SubspaceBasis& v) {
  if (obj.p() != v.p() || obj.s() != v.s())
    fail(ErrorKind::dimension_mismatch, "objective and basis disagree on dimensions");
  return obj.gradient(v.matrix());
}

Matrix riemannian_gradient(const Eigen::Ref<const Matrix>& v, const Eigen::Ref<const Matrix>& grad) {
  return grad - v * (grad.transpose() * v);
}

std::optional<SubspaceBasis> cayley_step(const SubspaceBasis& v, const Eigen::Ref<const Matrix>& grad,
                                         double tau) {
  if (!(tau >= 0)) fail(ErrorKind::invalid_input, "Cayley step size must be nonnegative");
  if (grad.rows() != v.p() || grad.cols() != v.s())
    fail(ErrorKind::dimension_mismatch, "gradient shape must match basis");
  if (tau == 0.0) return v;

  const Index p = v.p();
  const Index s = v.s();
  const Matrix& x = v.matrix();
  // W = U Z^T with U = [G, X], Z = [X, -G].
  Matrix u(p, 2 * s);
  u << grad, x;
  Matrix z(p, 2 * s);
  z << x, -grad;

  Matrix small = Matrix::Identity(2 * s, 2 * s) + 0.5 * tau * (z.transpose() * u);
  Eigen::FullPivLU<Matrix> lu(small);
  if (!lu.isInvertible() || !std::isfinite(lu.rcond()) || lu.rcond() < 1e-14) return std::nullopt;
  const Matrix ztx = z.transpose() * x;
  Matrix y = x - tau * (u * lu.solve(ztx));
  if (!y.allFinite()) return std::nullopt;
  if (orthonormality_error(y) > 1e-12) return SubspaceBasis::orthonormalized(y);
  return SubspaceBasis(std::move(y));
}

MaximizeResult maximize(const TraceObjective& obj, const SubspaceBasis& v0, const OptimizerOptions& opts) {
  opts.validate();
  if (obj.terms().empty() || obj.is_flat()) {
    MaximizeResult out{v0, {obj.terms().empty() ? 0.0 : obj.value(v0.matrix())}, 0, true};
    return out;
  }
  if (obj.p() != v0.p() || obj.s() != v0.s())
    fail(ErrorKind::dimension_mismatch, "objective and starting basis disagree on dimensions");

  SubspaceBasis v = v0;
  Matrix g;
  double f = obj.value_and_gradient(v.matrix(), g);
  if (!std::isfinite(f)) fail(ErrorKind::numerical_failure, "objective is not finite at the start");

  MaximizeResult result{v, {f}, 0, false};
  double tau = opts.step_init;
  // Descent formulation on -F: descent gradient is -G.
  Matrix dgrad = -g;
  Matrix dir = riemannian_gradient(v.matrix(), dgrad);
  int bb_parity = 0;

  for (int it = 0; it < opts.max_iters; ++it) {
    const double gnorm = dir.norm();
    if (gnorm <= opts.grad_tol * (1.0 + std::abs(f))) {
      result.converged = true;
      break;
    }
    // ||W||_F^2 = 2 ||G||^2 - 2 tr((V^T G)^2)
    const Matrix m = v.matrix().transpose() * dgrad;
    const double wnorm2 = std::max(0.0, 2.0 * dgrad.squaredNorm() - 2.0 * (m * m).trace());
    const double slope = 0.5 * wnorm2;

    bool accepted = false;
    double trial_tau = tau;
    std::optional<SubspaceBasis> next;
    double fn = f;
    Matrix gn;
    for (int bt = 0; bt < opts.max_backtracks; ++bt, trial_tau *= 0.5) {
      next = cayley_step(v, dgrad, trial_tau);
      if (!next) continue;
      fn = obj.value_and_gradient(next->matrix(), gn);
      if (!std::isfinite(fn)) continue;
      if (fn >= f + opts.armijo_c * trial_tau * slope && fn >= f) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No admissible step: the iterate is stationary to working precision.
      result.converged = gnorm <= 1e-3 * opts.grad_tol * (1.0 + std::abs(f)) ||
                         slope * trial_tau <= 1e-15 * (1.0 + std::abs(f));
      break;
    }

    const Matrix step = next->matrix() - v.matrix();
    const Matrix dgrad_new = -gn;
    const Matrix dir_new = riemannian_gradient(next->matrix(), dgrad_new);
    const Matrix ydiff = dir_new - dir;

    v = *next;
    f = fn;
    dgrad = dgrad_new;
    dir = dir_new;
    result.trace.push_back(f);
    result.iterations = it + 1;

    const double sy = std::abs((step.cwiseProduct(ydiff)).sum());
    double bb = tau;
    if (sy > 0) {
      bb = (bb_parity++ % 2 == 0) ? step.squaredNorm() / sy : sy / std::max(ydiff.squaredNorm(), 1e-300);
    }
    if (!std::isfinite(bb) || bb <= 0) bb = opts.step_init;
    tau = std::clamp(bb, 1e-20, 1e20);
  }
  if (!result.converged) {
    const double gnorm = dir.norm();
    result.converged = gnorm <= opts.grad_tol * (1.0 + std::abs(f));
  }
  result.v = v;
  return result;
}

}  // namespace covshare
