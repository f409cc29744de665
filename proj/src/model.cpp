#include "covshare/model.hpp"

#include "covshare/error.hpp"

#include <cmath>
#include <string>

namespace covshare {

namespace {

void require_finite(const Eigen::Ref<const Matrix>& m, const char* what) {
  if (!m.allFinite()) fail(ErrorKind::invalid_input, std::string(what) + " has non-finite entries");
}

}  // namespace

GroupDataset GroupDataset::from_scatter(Matrix scatter, int n) {
  if (scatter.rows() != scatter.cols())
    fail(ErrorKind::invalid_input, "scatter matrix must be square");
  if (n < 1) fail(ErrorKind::invalid_input, "degrees of freedom n must be >= 1");
  require_finite(scatter, "scatter");
  GroupDataset d;
  const double scale = std::max(1.0, scatter.cwiseAbs().maxCoeff());
  if ((scatter - scatter.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    fail(ErrorKind::invalid_input, "scatter matrix is not symmetric");
  d.scatter = 0.5 * (scatter + scatter.transpose());
  d.n = n;
  validate(d);
  return d;
}

GroupDataset scatter_from_data(const Matrix& raw) {
  if (raw.rows() < 1) fail(ErrorKind::invalid_input, "data must have at least one row");
  if (raw.cols() < 2) fail(ErrorKind::invalid_input, "data must have at least two columns");
  require_finite(raw, "data");
  GroupDataset d;
  Matrix s = raw.transpose() * raw;
  d.scatter = 0.5 * (s + s.transpose());
  d.n = static_cast<int>(raw.rows());
  d.raw = raw;
  return d;
}

void validate(const GroupDataset& data) {
  const Matrix& s = data.scatter;
  if (s.rows() != s.cols()) fail(ErrorKind::invalid_input, "scatter matrix must be square");
  if (data.n < 1) fail(ErrorKind::invalid_input, "degrees of freedom n must be >= 1");
  require_finite(s, "scatter");
  const double fro = s.norm();
  if ((s - s.transpose()).norm() > 1e-10 * std::max(fro, 1e-300) && fro > 0)
    fail(ErrorKind::invalid_input, "scatter matrix is not symmetric");
  const double tr = s.trace();
  if (s.rows() > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
    if (es.eigenvalues()(0) < -1e-8 * std::abs(tr))
      fail(ErrorKind::invalid_input, "scatter matrix is not positive semidefinite");
  }
  if (data.raw) {
    const Matrix& y = *data.raw;
    if (y.cols() != s.rows() || y.rows() != data.n)
      fail(ErrorKind::invalid_input, "raw data shape does not match scatter / n");
    if ((y.transpose() * y - s).norm() > 1e-8 * std::max(fro, 1e-300))
      fail(ErrorKind::invalid_input, "raw data inconsistent with scatter");
  }
}

double orthonormality_error(const Eigen::Ref<const Matrix>& a) {
  return (a.transpose() * a - Matrix::Identity(a.cols(), a.cols())).norm();
}

SubspaceBasis::SubspaceBasis(Matrix v, double tol) : v_(std::move(v)) {
  if (v_.cols() < 1 || v_.rows() < 1)
    fail(ErrorKind::invalid_input, "subspace basis must be non-empty");
  if (v_.cols() > v_.rows())
    fail(ErrorKind::invalid_input, "subspace dimension s exceeds ambient dimension p");
  require_finite(v_, "subspace basis");
  const double err = orthonormality_error(v_);
  if (err > tol)
    fail(ErrorKind::invalid_input,
         "subspace basis columns are not orthonormal (defect " + std::to_string(err) + ")");
}

SubspaceBasis SubspaceBasis::orthonormalized(const Matrix& a) {
  if (a.cols() > a.rows() || a.cols() < 1)
    fail(ErrorKind::invalid_input, "cannot orthonormalize: need 1 <= s <= p");
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
  const Matrix r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
  for (Index j = 0; j < a.cols(); ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return SubspaceBasis(std::move(q));
}

SubspaceBasis SubspaceBasis::coordinate(Index p, Index s) {
  return SubspaceBasis(Matrix::Identity(p, s));
}

GroupSpikeParams::GroupSpikeParams(double sigma2, Matrix eigvecs, Vector omega, double tol)
    : sigma2_(sigma2), eigvecs_(std::move(eigvecs)), omega_(std::move(omega)) {
  if (!(sigma2_ > 0) || !std::isfinite(sigma2_))
    fail(ErrorKind::invalid_input, "sigma2 must be positive and finite");
  if (eigvecs_.cols() != omega_.size())
    fail(ErrorKind::dimension_mismatch, "eigvecs columns must equal omega length");
  if (eigvecs_.cols() > eigvecs_.rows())
    fail(ErrorKind::dimension_mismatch, "rank r exceeds subspace dimension s");
  if (omega_.size() > 0 && orthonormality_error(eigvecs_) > tol)
    fail(ErrorKind::invalid_input, "eigvecs columns are not orthonormal");
  for (Index i = 0; i < omega_.size(); ++i) {
    if (!(omega_(i) >= 0.0 && omega_(i) < 1.0))
      fail(ErrorKind::invalid_input, "omega entries must lie in [0, 1)");
    if (i > 0 && omega_(i) > omega_(i - 1))
      fail(ErrorKind::invalid_input, "omega entries must be in decreasing order");
  }
}

Vector GroupSpikeParams::lambda() const { return lambda_from_omega(omega_); }

Matrix GroupSpikeParams::psi_scaled() const {
  return eigvecs_ * lambda().asDiagonal() * eigvecs_.transpose();
}

PartitionedPsi::PartitionedPsi(GroupSpikeParams block, Vector shared)
    : group_block(std::move(block)), shared_diag(std::move(shared)) {
  for (Index j = 0; j < shared_diag.size(); ++j)
    if (!(shared_diag(j) > 0) || !std::isfinite(shared_diag(j)))
      fail(ErrorKind::invalid_input, "shared diagonal entries must be positive");
}

void ModelConfig::validate() const {
  if (p < 1 || s < 1 || k_groups < 1 || r < 0)
    fail(ErrorKind::invalid_input, "p, s, k_groups must be positive and r nonnegative");
  if (r > s) fail(ErrorKind::invalid_input, "r must not exceed s");
  if (s >= p) fail(ErrorKind::invalid_input, "s must be smaller than p");
}

double omega_from_lambda(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    fail(ErrorKind::invalid_input, "lambda must be finite and nonnegative");
  return lambda / (lambda + 1.0);
}

double lambda_from_omega(double omega) {
  if (!(omega >= 0.0 && omega < 1.0))
    fail(ErrorKind::invalid_input, "omega must lie in [0, 1)");
  return omega / (1.0 - omega);
}

Vector omega_from_lambda(const Vector& lambda) {
  Vector out(lambda.size());
  for (Index i = 0; i < lambda.size(); ++i) out(i) = omega_from_lambda(lambda(i));
  return out;
}

Vector lambda_from_omega(const Vector& omega) {
  Vector out(omega.size());
  for (Index i = 0; i < omega.size(); ++i) out(i) = lambda_from_omega(omega(i));
  return out;
}

Matrix project_scatter(const SubspaceBasis& v, const Eigen::Ref<const Matrix>& scatter) {
  if (scatter.rows() != v.p() || scatter.cols() != v.p())
    fail(ErrorKind::dimension_mismatch, "scatter and subspace basis disagree on p");
  Matrix m = v.matrix().transpose() * scatter * v.matrix();
  return 0.5 * (m + m.transpose());
}

namespace {

void check_dims(const SubspaceBasis& v, const GroupSpikeParams& params) {
  if (params.dim() != v.s())
    fail(ErrorKind::dimension_mismatch, "eigvecs rows must equal subspace dimension s");
}

}  // namespace

Matrix assemble_sigma(const SubspaceBasis& v, const GroupSpikeParams& params) {
  check_dims(v, params);
  const Matrix u = v.matrix() * params.eigvecs();
  Matrix sigma = u * params.lambda().asDiagonal() * u.transpose();
  sigma.diagonal().array() += 1.0;
  sigma *= params.sigma2();
  return 0.5 * (sigma + sigma.transpose());
}

Matrix assemble_sigma(const SubspaceBasis& v, const PartitionedPsi& params) {
  if (params.dim() != v.s())
    fail(ErrorKind::dimension_mismatch, "partitioned model dimension must equal s");
  const Index r = params.group_block.dim();
  const Matrix v1 = v.matrix().leftCols(r);
  const Matrix v2 = v.matrix().rightCols(v.s() - r);
  const Matrix u = v1 * params.group_block.eigvecs();
  Matrix sigma = u * params.group_block.lambda().asDiagonal() * u.transpose() +
                 v2 * params.shared_diag.asDiagonal() * v2.transpose();
  sigma.diagonal().array() += 1.0;
  sigma *= params.group_block.sigma2();
  return 0.5 * (sigma + sigma.transpose());
}

Matrix precision_woodbury(const GroupSpikeParams& params, const SubspaceBasis& v) {
  check_dims(v, params);
  for (Index i = 0; i < params.rank(); ++i)
    if (params.omega()(i) >= 1.0) fail(ErrorKind::singular_model, "omega == 1 (infinite spike)");
  const Matrix u = v.matrix() * params.eigvecs();
  Matrix prec = -(u * params.omega().asDiagonal() * u.transpose());
  prec.diagonal().array() += 1.0;
  prec /= params.sigma2();
  return 0.5 * (prec + prec.transpose());
}

double log_det_sigma(const GroupSpikeParams& params, Index p) {
  // |Sigma| = sigma2^p prod(1 + lambda_i) = sigma2^p / prod(1 - omega_i)
  double out = static_cast<double>(p) * std::log(params.sigma2());
  for (Index i = 0; i < params.rank(); ++i) out -= std::log1p(-params.omega()(i));
  return out;
}

double wishart_loglik(const GroupSpikeParams& params, const SubspaceBasis& v,
                      const GroupDataset& data) {
  check_dims(v, params);
  if (data.p() != v.p()) fail(ErrorKind::dimension_mismatch, "data and basis disagree on p");
  const Matrix u = v.matrix() * params.eigvecs();
  const Matrix su = data.scatter * u;
  double quad = data.scatter.trace();
  for (Index i = 0; i < params.rank(); ++i) quad -= params.omega()(i) * u.col(i).dot(su.col(i));
  const double trace_term = quad / params.sigma2();
  return -0.5 * data.n * log_det_sigma(params, v.p()) - 0.5 * trace_term;
}

}  // namespace covshare
