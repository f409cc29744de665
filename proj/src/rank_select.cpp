#include "covshare/rank_select.hpp"

#include "covshare/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace covshare {

double gavish_donoho_omega(double beta) {
  return 0.56 * beta * beta * beta - 0.95 * beta * beta + 1.82 * beta + 1.43;
}

namespace {

double median(std::vector<double> v) {
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(m), v.end());
  if (v.size() % 2 == 1) return v[m];
  const double hi = v[m];
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<long>(m));
  return 0.5 * (lo + hi);
}

std::vector<double> sv_from_scatter(const Matrix& scatter, long n) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(scatter, Eigen::EigenvaluesOnly);
  const Vector& ev = es.eigenvalues();
  const long keep = std::min<long>(n, static_cast<long>(ev.size()));
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(keep));
  for (long i = 0; i < keep; ++i) out.push_back(std::sqrt(std::max(ev(ev.size() - 1 - i), 0.0)));
  return out;
}

}  // namespace

RankEstimate gavish_donoho_rank(std::span<const double> singular_values, long n, long p) {
  if (singular_values.empty()) fail(ErrorKind::invalid_input, "no singular values");
  if (n < 1 || p < 1) fail(ErrorKind::invalid_input, "n and p must be positive");
  std::vector<double> sv(singular_values.begin(), singular_values.end());
  std::sort(sv.begin(), sv.end(), std::greater<>());
  const long m = std::min(n, p);
  if (static_cast<long>(sv.size()) > m) sv.resize(static_cast<std::size_t>(m));
  for (double x : sv)
    if (!(x >= 0) || !std::isfinite(x)) fail(ErrorKind::invalid_input, "singular values must be finite and >= 0");
  if (!(sv.front() > 0)) fail(ErrorKind::invalid_input, "need at least one positive singular value");

  RankEstimate est;
  est.beta = static_cast<double>(m) / static_cast<double>(std::max(n, p));
  est.median_sv = median(sv);
  est.threshold = gavish_donoho_omega(est.beta) * est.median_sv;
  if (!(est.threshold > 0)) {
    // median singular value is zero: the matrix has rank below min(n, p)/2
    est.threshold = std::numeric_limits<double>::min();
  }
  est.rank = static_cast<int>(std::count_if(sv.begin(), sv.end(), [&](double x) { return x > est.threshold; }));
  return est;
}

std::vector<double> singular_values(const GroupDataset& data) {
  if (data.raw) {
    Eigen::JacobiSVD<Matrix> svd(*data.raw);
    const Vector& s = svd.singularValues();
    return std::vector<double>(s.data(), s.data() + s.size());
  }
  return sv_from_scatter(data.scatter, data.n);
}

RankEstimate estimate_group_rank(const GroupDataset& data) {
  return gavish_donoho_rank(singular_values(data), data.n, static_cast<long>(data.p()));
}

RankEstimate estimate_shared_dimension(std::span<const GroupDataset> data) {
  if (data.empty()) fail(ErrorKind::invalid_input, "need at least one group");
  const Index p = data[0].p();
  if (data.size() == 1) return estimate_group_rank(data[0]);
  Matrix pooled = Matrix::Zero(p, p);
  long n = 0;
  for (const auto& d : data) {
    if (d.p() != p) fail(ErrorKind::dimension_mismatch, "groups disagree on p");
    pooled += d.scatter;
    n += d.n;
  }
  return gavish_donoho_rank(sv_from_scatter(pooled, n), n, static_cast<long>(p));
}

}  // namespace covshare
