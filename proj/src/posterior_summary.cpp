#include "covshare/posterior_summary.hpp"

#include "covshare/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace covshare {

double fold_half_turn(double angle) {
  const double pi = std::numbers::pi;
  double a = std::fmod(angle, pi);
  if (a <= -pi / 2) a += pi;
  if (a > pi / 2) a -= pi;
  return a;
}

AngleRatioSummary angle_logratio(const GroupSpikeParams& params) {
  if (params.rank() != 2) fail(ErrorKind::invalid_input, "angle/log-ratio summary needs r == 2");
  if (params.dim() < 2) fail(ErrorKind::invalid_input, "angle/log-ratio summary needs s >= 2");
  const Vector lambda = params.lambda();
  if (lambda(0) < lambda(1)) fail(ErrorKind::invalid_input, "eigenvalues must be sorted decreasingly");
  const double lam2 = std::max(lambda(1), std::numeric_limits<double>::min());
  const Matrix& o = params.eigvecs();
  return AngleRatioSummary{fold_half_turn(std::atan2(o(1, 0), o(0, 0))), std::log(lambda(0) / lam2)};
}

std::vector<AngleRatioSummary> summarize_chain(const GibbsChain& chain) {
  std::vector<AngleRatioSummary> out;
  out.reserve(chain.draws.size());
  for (const auto& d : chain.draws) out.push_back(angle_logratio(d));
  return out;
}

namespace {

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool lex_less(const Point2& a, const Point2& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); }

}  // namespace

std::vector<Point2> convex_hull(std::span<const Point2> points) {
  std::vector<Point2> pts(points.begin(), points.end());
  std::sort(pts.begin(), pts.end(), lex_less);
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() <= 2) return pts;
  std::vector<Point2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

PosteriorRegion hull_peel_region(std::span<const Point2> points, double target) {
  if (!(target > 0 && target < 1)) fail(ErrorKind::invalid_input, "coverage target must lie in (0, 1)");
  if (points.size() < 10) fail(ErrorKind::invalid_input, "hull peeling needs at least 10 points");
  for (const auto& p : points)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) fail(ErrorKind::invalid_input, "non-finite sample point");

  const double total = static_cast<double>(points.size());
  std::vector<Point2> alive(points.begin(), points.end());
  for (;;) {
    const std::vector<Point2> hull = convex_hull(alive);
    std::vector<Point2> sorted_hull = hull;
    std::sort(sorted_hull.begin(), sorted_hull.end(), lex_less);
    std::vector<Point2> survivors;
    survivors.reserve(alive.size());
    for (const auto& p : alive)
      if (!std::binary_search(sorted_hull.begin(), sorted_hull.end(), p, lex_less)) survivors.push_back(p);
    if (survivors.empty() || static_cast<double>(survivors.size()) / total < target) break;
    alive = std::move(survivors);
  }
  PosteriorRegion region;
  region.vertices = convex_hull(alive);
  region.coverage_target = target;
  region.retained_count = static_cast<int>(alive.size());
  region.total_count = static_cast<int>(points.size());
  return region;
}

bool contains(const PosteriorRegion& region, const Point2& q, double eps) {
  const auto& v = region.vertices;
  if (v.empty()) return false;
  if (v.size() == 1) return std::abs(v[0].x - q.x) <= eps && std::abs(v[0].y - q.y) <= eps;
  if (v.size() == 2) {
    const double len = std::hypot(v[1].x - v[0].x, v[1].y - v[0].y);
    if (std::abs(cross(v[0], v[1], q)) > eps * std::max(1.0, len)) return false;
    const double t = ((q.x - v[0].x) * (v[1].x - v[0].x) + (q.y - v[0].y) * (v[1].y - v[0].y)) / (len * len);
    return t >= -eps && t <= 1 + eps;
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Point2& a = v[i];
    const Point2& b = v[(i + 1) % v.size()];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    if (cross(a, b, q) < -eps * std::max(1.0, len)) return false;
  }
  return true;
}

Matrix procrustes_align(const Eigen::Ref<const Matrix>& v_hat, const Eigen::Ref<const Matrix>& v_ref) {
  if (v_hat.rows() != v_ref.rows() || v_hat.cols() != v_ref.cols())
    fail(ErrorKind::dimension_mismatch, "Procrustes alignment needs equal shapes");
  const Matrix m = v_hat.transpose() * v_ref;
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

}  // namespace covshare
