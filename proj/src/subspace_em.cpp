#include "covshare/subspace_em.hpp"

#include "covshare/error.hpp"

#include <cmath>
#include <string>

namespace covshare {

namespace {

void check_group(const SubspaceBasis& v, const GroupDataset& d, std::size_t k) {
  if (d.p() != v.p())
    fail(ErrorKind::dimension_mismatch, "group " + std::to_string(k) + " has p != basis rows");
}

// tr((I - VV^T) S) = tr(S) - tr(V^T S V)
double residual_trace(const Matrix& vsv, const GroupDataset& d) {
  return d.scatter.trace() - vsv.trace();
}

}  // namespace

EStepExpectations e_step(const SubspaceBasis& v, std::span<const GroupDataset> data) {
  EStepExpectations ex;
  const double p = static_cast<double>(v.p());
  const double s = static_cast<double>(v.s());
  for (std::size_t k = 0; k < data.size(); ++k) {
    const GroupDataset& d = data[k];
    check_group(v, d, k);
    const Matrix vsv = project_scatter(v, d.scatter);
    Eigen::LLT<Matrix> llt(vsv);
    const double scale = std::max(vsv.cwiseAbs().maxCoeff(), 1e-300);
    Eigen::SelfAdjointEigenSolver<Matrix> es(vsv, Eigen::EigenvaluesOnly);
    if (llt.info() != Eigen::Success || es.eigenvalues()(0) <= 1e-12 * scale)
      fail(ErrorKind::degenerate_projection,
           "V^T S V is singular for group " + std::to_string(k));
    Matrix inv = llt.solve(Matrix::Identity(v.s(), v.s()));
    ex.inv_m.push_back(static_cast<double>(d.n) * 0.5 * (inv + inv.transpose()));
    const double rt = residual_trace(vsv, d);
    if (!(rt > 1e-12 * std::max(d.scatter.trace(), 1e-300)))
      fail(ErrorKind::degenerate_noise,
           "tr((I - VV^T) S) is not positive for group " + std::to_string(k));
    ex.inv_sigma2.push_back(static_cast<double>(d.n) * (p - s) / rt);
  }
  return ex;
}

TraceObjective m_step_objective(const EStepExpectations& ex, std::span<const GroupDataset> data) {
  if (ex.inv_m.size() != data.size() || ex.inv_sigma2.size() != data.size())
    fail(ErrorKind::dimension_mismatch, "expectations and data disagree on group count");
  TraceObjective obj;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const Index s = ex.inv_m[k].rows();
    Matrix b = ex.inv_sigma2[k] * Matrix::Identity(s, s) - ex.inv_m[k];
    obj.add_term(data[k].scatter, std::move(b), data[k].raw);
  }
  return obj;
}

SubspaceBasis m_step(const EStepExpectations& ex, std::span<const GroupDataset> data,
                     const SubspaceBasis& v_prev, const OptimizerOptions& opts) {
  const TraceObjective obj = m_step_objective(ex, data);
  return maximize(obj, v_prev, opts).v;
}

double log_marginal_likelihood(const SubspaceBasis& v, std::span<const GroupDataset> data) {
  const double ps = static_cast<double>(v.p() - v.s());
  double out = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const GroupDataset& d = data[k];
    check_group(v, d, k);
    const Matrix vsv = project_scatter(v, d.scatter);
    Eigen::LLT<Matrix> llt(vsv);
    if (llt.info() != Eigen::Success)
      fail(ErrorKind::degenerate_projection,
           "V^T S V is singular for group " + std::to_string(k));
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double rt = residual_trace(vsv, d);
    if (!(rt > 0))
      fail(ErrorKind::degenerate_noise,
           "tr((I - VV^T) S) is not positive for group " + std::to_string(k));
    out += -0.5 * d.n * logdet - 0.5 * d.n * ps * std::log(rt);
  }
  return out;
}

SubspaceBasis pooled_principal_subspace(std::span<const GroupDataset> data, Index s) {
  if (data.empty()) fail(ErrorKind::invalid_input, "need at least one group");
  const Index p = data[0].p();
  if (s < 1 || s >= p) fail(ErrorKind::invalid_input, "need 1 <= s < p");
  Matrix pooled = Matrix::Zero(p, p);
  for (const auto& d : data) {
    if (d.p() != p) fail(ErrorKind::dimension_mismatch, "groups disagree on p");
    pooled += d.scatter;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(pooled);
  return SubspaceBasis::orthonormalized(es.eigenvectors().rightCols(s).rowwise().reverse());
}

EmFitResult fit(std::span<const GroupDataset> data, Index s, const EmOptions& opts) {
  if (data.empty()) fail(ErrorKind::invalid_input, "need at least one group");
  const Index p = data[0].p();
  if (s < 1 || s >= p) fail(ErrorKind::invalid_input, "need 1 <= s < p");
  for (const auto& d : data) {
    if (d.n < 1) fail(ErrorKind::invalid_input, "every group needs n >= 1");
    if (d.p() != p) fail(ErrorKind::dimension_mismatch, "groups disagree on p");
  }
  if (opts.max_iters < 1 || !(opts.tol > 0)) fail(ErrorKind::invalid_input, "invalid EM options");

  SubspaceBasis v = opts.init ? *opts.init : pooled_principal_subspace(data, s);
  if (v.p() != p || v.s() != s) fail(ErrorKind::dimension_mismatch, "initial basis has wrong shape");

  EmFitResult result{v, {log_marginal_likelihood(v, data)}, 0, false};
  EStepExpectations ex = e_step(v, data);
  for (int it = 0; it < opts.max_iters; ++it) {
    const TraceObjective obj = m_step_objective(ex, data);
    const MaximizeResult m = maximize(obj, v, opts.inner);
    const double prev = result.objective_trace.back();
    result.iterations = it + 1;
    // With n_k < p the likelihood is unbounded near subspaces that meet the
    // null space of some S_k; stop at the last well-posed iterate.
    double next = 0.0;
    EStepExpectations next_ex;
    try {
      next = log_marginal_likelihood(m.v, data);
      next_ex = e_step(m.v, data);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::degenerate_projection && e.kind() != ErrorKind::degenerate_noise) throw;
      break;
    }
    if (!std::isfinite(next)) fail(ErrorKind::numerical_failure, "marginal likelihood is not finite");
    // A step that loses marginal likelihood beyond rounding is rejected.
    if (next < prev - 1e-10 * (1.0 + std::abs(prev))) {
      result.converged = true;
      break;
    }
    v = m.v;
    ex = std::move(next_ex);
    result.objective_trace.push_back(next);
    if (std::abs(next - prev) <= opts.tol * (1.0 + std::abs(next))) {
      result.converged = true;
      break;
    }
  }
  result.v_hat = v;
  return result;
}

double sigma2_plugin(const SubspaceBasis& v, const GroupDataset& data) {
  check_group(v, data, 0);
  if (v.s() >= v.p()) fail(ErrorKind::invalid_input, "need s < p");
  const Matrix vsv = project_scatter(v, data.scatter);
  const double rt = residual_trace(vsv, data);
  if (!(rt > 0)) fail(ErrorKind::degenerate_noise, "tr((I - VV^T) S) is not positive");
  return rt / (static_cast<double>(data.n) * static_cast<double>(v.p() - v.s()));
}

double goodness_of_fit(const GroupDataset& data, const SubspaceBasis& v, double sigma2, GofNorm norm) {
  check_group(v, data, 0);
  if (!(sigma2 >= 0)) fail(ErrorKind::invalid_input, "sigma2 must be nonnegative");
  const double n = static_cast<double>(data.n);
  const double captured = project_scatter(v, data.scatter).trace();
  Eigen::SelfAdjointEigenSolver<Matrix> es(data.scatter, Eigen::EigenvaluesOnly);
  const double top = es.eigenvalues().tail(v.s()).sum();
  double num = 0.0;
  double den = 0.0;
  const double penalty = sigma2 * static_cast<double>(v.p()) * static_cast<double>(v.s()) / n;
  if (norm == GofNorm::squared) {
    num = captured / n;
    den = top / n - penalty;
  } else {
    num = std::sqrt(std::max(captured, 0.0)) / n;
    den = std::sqrt(std::max(top, 0.0)) / n - penalty;
  }
  if (!(den > 0))
    fail(ErrorKind::invalid_input,
         "goodness-of-fit denominator is not positive; try a smaller s or re-estimate sigma2");
  return num / den;
}

}  // namespace covshare
