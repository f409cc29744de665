#pragma once

// Synthetic data from the shared-subspace spiked model and the loss /
// accuracy metrics used to evaluate estimators.

#include "covshare/model.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace covshare::sim {

enum class SubspaceMode {
  shared_random,          // one V, per-group O_k uniform on V_{s,r}
  identical_covariance,   // one (V, O, Lambda) for all groups
  full_rank_independent,  // per-group U_k uniform on V_{p,r}
};

const char* to_string(SubspaceMode mode);

struct GenConfig {
  int p = 200;
  int s = 2;
  int r = 2;
  int k_groups = 5;
  int n_per_group = 50;
  Vector lambdas;              // length r, decreasing (ties allowed)
  std::vector<double> sigma2;  // one per group, or a single shared value
  SubspaceMode subspace_mode = SubspaceMode::shared_random;
  std::uint64_t seed = 0;
  // Optional per-group overrides (shared_random mode only).
  std::vector<Vector> group_lambdas;
  std::vector<Matrix> group_eigvecs;  // s x r each

  void validate() const;
  double sigma2_of(int k) const;
};

struct GroupTruth {
  Matrix u;  // p x r spike directions
  Vector lambda;
  double sigma2 = 1.0;
  std::optional<Matrix> o;  // s x r, when a shared V exists

  Matrix sigma() const;
};

struct Truth {
  std::optional<Matrix> v;  // shared basis (absent for full_rank_independent)
  std::vector<GroupTruth> groups;
};

struct GeneratedData {
  std::vector<GroupDataset> groups;
  Truth truth;
};

/// Haar-distributed p x s orthonormal frame (QR of a Gaussian matrix with the
/// signs of R's diagonal made positive).
SubspaceBasis sample_uniform_stiefel(Rng& rng, Index p, Index s);

GeneratedData generate_groups(const GenConfig& config);

/// Rows y = sqrt(sigma2) (z + U Lambda^{1/2} w), z ~ N(0, I_p), w ~ N(0, I_r).
Matrix sample_rows(Rng& rng, const GroupTruth& truth, int n);

/// tr(Sigma^{-1} Sigma_hat) - log|Sigma^{-1} Sigma_hat| - p.
double steins_loss(const Eigen::Ref<const Matrix>& sigma_true, const Eigen::Ref<const Matrix>& sigma_hat);

double average_steins_loss(std::span<const Matrix> truths, std::span<const Matrix> estimates);

/// tr(Vh Vh^T V V^T) / s.
double subspace_accuracy(const Eigen::Ref<const Matrix>& v_hat, const Eigen::Ref<const Matrix>& v_true);

struct BenchmarkValue {
  double value = 0.0;
  bool clamped = false;  // at least one undetectable spike term set to 0
};

/// Per-spike term (1 - g/(K(l-1)^2)) / (1 + g/(K(l-1))), l a population
/// eigenvalue of Sigma / sigma2; 0 (flagged) when l <= 1 + sqrt(g/K).
BenchmarkValue accuracy_term(double lambda, double gamma_ratio, int k_groups);

/// Mean of accuracy_term over the spikes.
BenchmarkValue pooled_accuracy_benchmark(std::span<const double> lambdas, double gamma_ratio, int k_groups);

struct BiasPrediction {
  double value = 0.0;
  bool detectable = true;
};

/// Limit of a sample spike eigenvalue of S/n: lambda (1 + sigma2 alpha / (lambda - 1)),
/// or lambda + sigma2 alpha when `simplified`. `lambda` is a population
/// eigenvalue; lambda <= 1 + sqrt(alpha) is flagged undetectable.
BiasPrediction eigenvalue_bias_prediction(double lambda, double sigma2, double alpha, bool simplified = false);

/// Linear-interpolation quantile of a sample (q in [0, 1]).
double quantile(std::vector<double> values, double q);

}  // namespace covshare::sim
