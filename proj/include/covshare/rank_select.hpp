#pragma once

// Rank estimation by optimal hard thresholding of singular values with
// unknown noise level: threshold = w(beta) * median singular value.

#include "covshare/model.hpp"

#include <span>

namespace covshare {

struct RankEstimate {
  int rank = 0;
  double threshold = 0.0;
  double median_sv = 0.0;
  double beta = 1.0;
};

/// w(beta) ~= 0.56 beta^3 - 0.95 beta^2 + 1.82 beta + 1.43.
double gavish_donoho_omega(double beta);

/// `singular_values` in any order; the count strictly above the threshold is
/// returned. Only the leading min(n, p) values are used.
RankEstimate gavish_donoho_rank(std::span<const double> singular_values, long n, long p);

/// Singular values of Y_k from the eigenvalues of S_k.
std::vector<double> singular_values(const GroupDataset& data);

RankEstimate estimate_group_rank(const GroupDataset& data);

/// Threshold applied to the concatenated (sum n_k) x p data matrix, whose
/// singular values are the square roots of the eigenvalues of sum_k S_k.
RankEstimate estimate_shared_dimension(std::span<const GroupDataset> data);

}  // namespace covshare
