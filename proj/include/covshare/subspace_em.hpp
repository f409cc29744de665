#pragma once

// Empirical-Bayes EM for the shared subspace V V^T.
//
// Under Jeffreys priors on M_k = sigma2_k (Psi_k + I) and sigma2_k, the
// conditional posteriors given V are inverse-Wishart(V^T S_k V, n_k) and
// inverse-gamma(n_k (p - s)/2, tr[(I - VV^T) S_k]/2). The E-step takes their
// inverse means; the M-step maximizes the resulting trace objective over the
// Stiefel manifold.

#include "covshare/model.hpp"
#include "covshare/stiefel.hpp"

#include <optional>
#include <span>
#include <vector>

namespace covshare {

struct EStepExpectations {
  std::vector<Matrix> inv_m;       // E[M_k^{-1} | V] = n_k (V^T S_k V)^{-1}
  std::vector<double> inv_sigma2;  // E[1/sigma2_k | V] = n_k (p - s) / tr[(I - VV^T) S_k]
};

struct EmOptions {
  int max_iters = 200;
  double tol = 1e-8;  // relative change in log marginal likelihood
  OptimizerOptions inner{};
  std::optional<SubspaceBasis> init;  // default: top-s eigenvectors of sum_k S_k
};

struct EmFitResult {
  SubspaceBasis v_hat;
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
};

EStepExpectations e_step(const SubspaceBasis& v, std::span<const GroupDataset> data);

/// Trace objective with B_k = E[1/sigma2_k] I - E[M_k^{-1}].
TraceObjective m_step_objective(const EStepExpectations& ex, std::span<const GroupDataset> data);

SubspaceBasis m_step(const EStepExpectations& ex, std::span<const GroupDataset> data,
                     const SubspaceBasis& v_prev, const OptimizerOptions& opts = {});

/// sum_k [ -(n_k/2) log|V^T S_k V| - (n_k (p - s)/2) log tr((I - VV^T) S_k) ].
double log_marginal_likelihood(const SubspaceBasis& v, std::span<const GroupDataset> data);

/// Top-s eigenvectors of sum_k S_k.
SubspaceBasis pooled_principal_subspace(std::span<const GroupDataset> data, Index s);

EmFitResult fit(std::span<const GroupDataset> data, Index s, const EmOptions& opts = {});

/// tr((I - VV^T) S_k) / (n_k (p - s)).
double sigma2_plugin(const SubspaceBasis& v, const GroupDataset& data);

enum class GofNorm {
  squared,     // ||Y V||_F^2 / n = tr(V^T S V) / n
  as_printed,  // ||Y V||_F / n
};

/// Proportion of estimated signal variance captured by the subspace:
///   tr(V^T S V)/n / (sum of top-s eigenvalues of S/n - sigma2 p s / n).
double goodness_of_fit(const GroupDataset& data, const SubspaceBasis& v, double sigma2,
                       GofNorm norm = GofNorm::squared);

}  // namespace covshare
