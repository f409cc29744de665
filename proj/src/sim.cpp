#include "covshare/sim.hpp"

#include "covshare/error.hpp"

#include <algorithm>
#include <cmath>

namespace covshare::sim {

const char* to_string(SubspaceMode mode) {
  switch (mode) {
    case SubspaceMode::shared_random: return "shared_random";
    case SubspaceMode::identical_covariance: return "identical_covariance";
    case SubspaceMode::full_rank_independent: return "full_rank_independent";
  }
  return "unknown";
}

void GenConfig::validate() const {
  if (p < 1 || s < 0 || r < 0 || k_groups < 1 || n_per_group < 1)
    fail(ErrorKind::invalid_input, "generator sizes must be positive");
  if (r > s || s > p) fail(ErrorKind::invalid_input, "need r <= s <= p");
  if (lambdas.size() != r) fail(ErrorKind::invalid_input, "need r spike eigenvalues");
  for (Index i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas(i) > 0)) fail(ErrorKind::invalid_input, "spike eigenvalues must be positive");
    if (i > 0 && lambdas(i) > lambdas(i - 1)) fail(ErrorKind::invalid_input, "spike eigenvalues must be decreasing");
  }
  if (sigma2.size() != 1 && sigma2.size() != static_cast<std::size_t>(k_groups))
    fail(ErrorKind::invalid_input, "sigma2 needs one value or one per group");
  for (double v : sigma2)
    if (!(v > 0)) fail(ErrorKind::invalid_input, "sigma2 must be positive");
  if (!group_lambdas.empty() && group_lambdas.size() != static_cast<std::size_t>(k_groups))
    fail(ErrorKind::invalid_input, "group_lambdas needs one entry per group");
  if (!group_eigvecs.empty() && group_eigvecs.size() != static_cast<std::size_t>(k_groups))
    fail(ErrorKind::invalid_input, "group_eigvecs needs one entry per group");
  for (const auto& l : group_lambdas)
    if (l.size() != r) fail(ErrorKind::invalid_input, "group_lambdas entries need length r");
  for (const auto& o : group_eigvecs)
    if (o.rows() != s || o.cols() != r || orthonormality_error(o) > 1e-10)
      fail(ErrorKind::invalid_input, "group_eigvecs entries must be s x r orthonormal");
}

double GenConfig::sigma2_of(int k) const {
  return sigma2.size() == 1 ? sigma2[0] : sigma2[static_cast<std::size_t>(k)];
}

Matrix GroupTruth::sigma() const {
  Matrix out = u * lambda.asDiagonal() * u.transpose();
  out.diagonal().array() += 1.0;
  out *= sigma2;
  return 0.5 * (out + out.transpose());
}

SubspaceBasis sample_uniform_stiefel(Rng& rng, Index p, Index s) {
  if (s < 1 || s > p) fail(ErrorKind::invalid_input, "need 1 <= s <= p");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(p, s);
  for (Index j = 0; j < s; ++j)
    for (Index i = 0; i < p; ++i) g(i, j) = normal(rng);
  return SubspaceBasis::orthonormalized(g);
}

Matrix sample_rows(Rng& rng, const GroupTruth& truth, int n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index p = truth.u.rows();
  const Index r = truth.lambda.size();
  Matrix z(n, p);
  for (Index j = 0; j < p; ++j)
    for (Index i = 0; i < n; ++i) z(i, j) = normal(rng);
  if (r > 0) {
    Matrix w(n, r);
    for (Index j = 0; j < r; ++j)
      for (Index i = 0; i < n; ++i) w(i, j) = normal(rng);
    z.noalias() += w * truth.lambda.cwiseSqrt().asDiagonal() * truth.u.transpose();
  }
  return std::sqrt(truth.sigma2) * z;
}

GeneratedData generate_groups(const GenConfig& config) {
  config.validate();
  Rng rng(config.seed);
  GeneratedData out;
  const int k_groups = config.k_groups;

  if (config.subspace_mode == SubspaceMode::full_rank_independent) {
    for (int k = 0; k < k_groups; ++k) {
      GroupTruth t;
      t.u = config.r > 0 ? sample_uniform_stiefel(rng, config.p, config.r).matrix() : Matrix(config.p, 0);
      t.lambda = config.lambdas;
      t.sigma2 = config.sigma2_of(k);
      out.truth.groups.push_back(std::move(t));
    }
  } else {
    if (config.s < 1) fail(ErrorKind::invalid_input, "shared modes need s >= 1");
    const Matrix v = sample_uniform_stiefel(rng, config.p, config.s).matrix();
    out.truth.v = v;
    Matrix o_common;
    if (config.subspace_mode == SubspaceMode::identical_covariance && config.r > 0)
      o_common = sample_uniform_stiefel(rng, config.s, config.r).matrix();
    for (int k = 0; k < k_groups; ++k) {
      GroupTruth t;
      Matrix o;
      if (config.r == 0) {
        o = Matrix(config.s, 0);
      } else if (config.subspace_mode == SubspaceMode::identical_covariance) {
        o = o_common;
      } else if (!config.group_eigvecs.empty()) {
        o = config.group_eigvecs[static_cast<std::size_t>(k)];
      } else {
        o = sample_uniform_stiefel(rng, config.s, config.r).matrix();
      }
      t.u = v * o;
      t.o = o;
      t.lambda = (config.subspace_mode == SubspaceMode::shared_random && !config.group_lambdas.empty())
                     ? config.group_lambdas[static_cast<std::size_t>(k)]
                     : config.lambdas;
      t.sigma2 = config.subspace_mode == SubspaceMode::identical_covariance ? config.sigma2_of(0)
                                                                             : config.sigma2_of(k);
      out.truth.groups.push_back(std::move(t));
    }
  }
  for (int k = 0; k < k_groups; ++k) {
    Matrix y = sample_rows(rng, out.truth.groups[static_cast<std::size_t>(k)], config.n_per_group);
    out.groups.push_back(scatter_from_data(y));
  }
  return out;
}

double steins_loss(const Eigen::Ref<const Matrix>& sigma_true, const Eigen::Ref<const Matrix>& sigma_hat) {
  if (sigma_true.rows() != sigma_hat.rows() || sigma_true.cols() != sigma_hat.cols() ||
      sigma_true.rows() != sigma_true.cols())
    fail(ErrorKind::dimension_mismatch, "Stein's loss needs square matrices of equal size");
  Eigen::LLT<Matrix> lt(sigma_true);
  Eigen::LLT<Matrix> lh(sigma_hat);
  if (lt.info() != Eigen::Success || lh.info() != Eigen::Success)
    fail(ErrorKind::invalid_input, "Stein's loss needs positive definite matrices");
  // tr(Sigma^{-1} Sigma_hat) = ||L^{-1} L_hat||_F^2
  const Matrix m = lt.matrixL().solve(lh.matrixL().toDenseMatrix());
  const double tr = m.squaredNorm();
  const double logdet_true = 2.0 * lt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double logdet_hat = 2.0 * lh.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return std::max(0.0, tr - (logdet_hat - logdet_true) - static_cast<double>(sigma_true.rows()));
}

double average_steins_loss(std::span<const Matrix> truths, std::span<const Matrix> estimates) {
  if (truths.size() != estimates.size() || truths.empty())
    fail(ErrorKind::dimension_mismatch, "need equally many (nonzero) truths and estimates");
  double total = 0.0;
  for (std::size_t k = 0; k < truths.size(); ++k) total += steins_loss(truths[k], estimates[k]);
  return total / static_cast<double>(truths.size());
}

double subspace_accuracy(const Eigen::Ref<const Matrix>& v_hat, const Eigen::Ref<const Matrix>& v_true) {
  if (v_hat.rows() != v_true.rows() || v_hat.cols() != v_true.cols() || v_hat.cols() < 1)
    fail(ErrorKind::dimension_mismatch, "subspace accuracy needs equal shapes");
  // tr(Vh Vh^T V V^T) = ||Vh^T V||_F^2
  return (v_hat.transpose() * v_true).squaredNorm() / static_cast<double>(v_hat.cols());
}

BenchmarkValue accuracy_term(double lambda, double gamma_ratio, int k_groups) {
  if (k_groups < 1 || !(gamma_ratio >= 0)) fail(ErrorKind::invalid_input, "need K >= 1 and gamma >= 0");
  const double g = gamma_ratio / static_cast<double>(k_groups);
  if (g == 0.0) return {1.0, false};
  if (!(lambda > 1.0 + std::sqrt(g))) return {0.0, true};
  const double d = lambda - 1.0;
  return {(1.0 - g / (d * d)) / (1.0 + g / d), false};
}

BenchmarkValue pooled_accuracy_benchmark(std::span<const double> lambdas, double gamma_ratio, int k_groups) {
  if (lambdas.empty()) fail(ErrorKind::invalid_input, "need at least one eigenvalue");
  BenchmarkValue out;
  for (double l : lambdas) {
    const BenchmarkValue t = accuracy_term(l, gamma_ratio, k_groups);
    out.value += t.value;
    out.clamped = out.clamped || t.clamped;
  }
  out.value /= static_cast<double>(lambdas.size());
  return out;
}

BiasPrediction eigenvalue_bias_prediction(double lambda, double sigma2, double alpha, bool simplified) {
  if (!(alpha >= 0) || !(sigma2 > 0)) fail(ErrorKind::invalid_input, "need alpha >= 0 and sigma2 > 0");
  if (alpha == 0.0) return {lambda, true};
  if (!(lambda > 1.0 + std::sqrt(alpha))) return {lambda, false};
  if (simplified) return {lambda + sigma2 * alpha, true};
  return {lambda * (1.0 + sigma2 * alpha / (lambda - 1.0)), true};
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) fail(ErrorKind::invalid_input, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace covshare::sim
