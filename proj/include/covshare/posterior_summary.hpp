#pragma once

// Two-dimensional posterior summaries: eigenvector angle / log eigenvalue
// ratio, hull-peeled credible regions and Procrustes alignment of bases.

#include "covshare/gibbs.hpp"
#include "covshare/model.hpp"

#include <span>
#include <vector>

namespace covshare {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

struct AngleRatioSummary {
  double angle = 0.0;      // radians, in (-pi/2, pi/2]
  double log_ratio = 0.0;  // log(lambda_1 / lambda_2) >= 0
};

/// Angle of the first eigenvector of Psi (column 0 of O) against the first
/// subspace axis, atan2(o_21, o_11) folded modulo pi; requires r == 2.
AngleRatioSummary angle_logratio(const GroupSpikeParams& params);

/// Folds an angle into (-pi/2, pi/2].
double fold_half_turn(double angle);

struct PosteriorRegion {
  std::vector<Point2> vertices;  // counter-clockwise convex polygon
  double coverage_target = 0.95;
  int retained_count = 0;
  int total_count = 0;
};

/// Convex hull vertices (Andrew's monotone chain), counter-clockwise,
/// collinear boundary points excluded, duplicates collapsed.
std::vector<Point2> convex_hull(std::span<const Point2> points);

/// Repeatedly removes every sample lying on a convex-hull vertex as long as
/// the retained fraction stays >= target; the region is the hull of the
/// survivors.
PosteriorRegion hull_peel_region(std::span<const Point2> points, double target = 0.95);

/// Inclusive point-in-convex-polygon test (boundary counts as inside).
bool contains(const PosteriorRegion& region, const Point2& point, double eps = 1e-12);

/// R = argmin_{R orthogonal} ||v_hat R - v_ref||_F, the polar factor of v_hat^T v_ref.
Matrix procrustes_align(const Eigen::Ref<const Matrix>& v_hat, const Eigen::Ref<const Matrix>& v_ref);

/// Angle/log-ratio summary of every draw in a rank-2 chain.
std::vector<AngleRatioSummary> summarize_chain(const GibbsChain& chain);

}  // namespace covshare
