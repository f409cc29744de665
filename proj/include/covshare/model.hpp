#pragma once

// Shared-subspace spiked covariance model: domain types and exact
// likelihood identities.
//
//   Sigma_k = sigma2_k * (U_k Lambda_k U_k^T + I),  U_k = V O_k,
//
// with the spike eigenvalues stored as omega = lambda / (lambda + 1).

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>

namespace covshare {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using Rng = std::mt19937_64;

/// One group's sufficient statistic S_k = Y_k^T Y_k with n_k degrees of freedom.
struct GroupDataset {
  Matrix scatter;
  int n = 0;
  std::optional<Matrix> raw;

  Index p() const { return scatter.rows(); }

  /// Validates and symmetrizes a precomputed scatter matrix.
  static GroupDataset from_scatter(Matrix scatter, int n);
};

/// S = raw^T raw, symmetrized; raw is kept for singular-value based routines.
GroupDataset scatter_from_data(const Matrix& raw);

/// Checks symmetry, PSD (smallest eigenvalue >= -1e-8 * trace) and raw/scatter
/// consistency. Throws Error(invalid_input).
void validate(const GroupDataset& data);

/// p x s matrix with orthonormal columns; identifies the subspace V V^T.
class SubspaceBasis {
 public:
  explicit SubspaceBasis(Matrix v, double tol = 1e-10);

  /// Orthonormalizes the columns of `a` (thin QR with positive R diagonal).
  static SubspaceBasis orthonormalized(const Matrix& a);
  /// First s coordinate axes of R^p.
  static SubspaceBasis coordinate(Index p, Index s);

  const Matrix& matrix() const { return v_; }
  Index p() const { return v_.rows(); }
  Index s() const { return v_.cols(); }
  Matrix projector() const { return v_ * v_.transpose(); }

 private:
  Matrix v_;
};

/// Orthonormality defect ||A^T A - I||_F.
double orthonormality_error(const Eigen::Ref<const Matrix>& a);

/// Per-group spiked parameters on the subspace: sigma2, O (s x r), omega (r).
class GroupSpikeParams {
 public:
  GroupSpikeParams(double sigma2, Matrix eigvecs, Vector omega, double tol = 1e-10);

  double sigma2() const { return sigma2_; }
  const Matrix& eigvecs() const { return eigvecs_; }
  const Vector& omega() const { return omega_; }
  Vector lambda() const;
  Index rank() const { return omega_.size(); }
  Index dim() const { return eigvecs_.rows(); }

  /// Psi / sigma2 = O Lambda O^T on the subspace (s x s).
  Matrix psi_scaled() const;

 private:
  double sigma2_;
  Matrix eigvecs_;
  Vector omega_;
};

/// Block model: group-specific spikes on the first r coordinates of the
/// subspace plus spikes `shared_diag` (lambda units, relative to each group's
/// sigma2) on the remaining s - r coordinates, common to all groups.
struct PartitionedPsi {
  GroupSpikeParams group_block;
  Vector shared_diag;

  PartitionedPsi(GroupSpikeParams block, Vector shared);
  Index dim() const { return group_block.dim() + shared_diag.size(); }
};

struct ModelConfig {
  int p = 0;
  int s = 0;
  int r = 0;
  int k_groups = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

double omega_from_lambda(double lambda);
double lambda_from_omega(double omega);
Vector omega_from_lambda(const Vector& lambda);
Vector lambda_from_omega(const Vector& omega);

/// V^T S V.
Matrix project_scatter(const SubspaceBasis& v, const Eigen::Ref<const Matrix>& scatter);

/// sigma2 (U Lambda U^T + I) with U = V O.
Matrix assemble_sigma(const SubspaceBasis& v, const GroupSpikeParams& params);
Matrix assemble_sigma(const SubspaceBasis& v, const PartitionedPsi& params);

/// (1/sigma2)(I - U Omega U^T).
Matrix precision_woodbury(const GroupSpikeParams& params, const SubspaceBasis& v);

/// log |Sigma| = p log sigma2 + sum log(1 + lambda_i).
double log_det_sigma(const GroupSpikeParams& params, Index p);

/// -(n/2) log|Sigma| - tr(Sigma^{-1} S)/2, additive constant dropped.
double wishart_loglik(const GroupSpikeParams& params, const SubspaceBasis& v,
                      const GroupDataset& data);

}  // namespace covshare
