#include "covshare/error.hpp"
#include "covshare/posterior_summary.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <numbers>

using namespace covshare;
using covshare::testing::random_orthonormal;

namespace {

Matrix rotation(double t) {
  Matrix r(2, 2);
  r << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
  return r;
}

GroupSpikeParams two_spikes(const Matrix& o, double l1, double l2) {
  return GroupSpikeParams(1.0, o, omega_from_lambda((Vector(2) << l1, l2).finished()));
}

}  // namespace

TEST_CASE("angle and log ratio") {
  auto axis = angle_logratio(two_spikes(Matrix::Identity(2, 2), 10.0, 1.0));
  CHECK(axis.angle == doctest::Approx(0.0));
  CHECK(axis.log_ratio == doctest::Approx(std::log(10.0)));

  const double pi = std::numbers::pi;
  auto diag = angle_logratio(two_spikes(rotation(pi / 4), 5.0, 2.0));
  CHECK(diag.angle == doctest::Approx(pi / 4));
  auto anti = angle_logratio(two_spikes(-rotation(pi / 4), 5.0, 2.0));
  CHECK(anti.angle == doctest::Approx(pi / 4));

  CHECK(fold_half_turn(pi) == doctest::Approx(0.0));
  CHECK(fold_half_turn(-pi / 2) == doctest::Approx(pi / 2));
  CHECK_THROWS_AS(angle_logratio(GroupSpikeParams(1.0, Matrix::Identity(3, 1), Vector::Constant(1, 0.5))), Error);
}

TEST_CASE("convex hull") {
  std::vector<Point2> pts{{0, 0}, {1, 0}, {2, 0}, {2, 2}, {0, 2}, {1, 1}, {0, 0}};
  auto hull = convex_hull(pts);
  CHECK(hull.size() == 4);  // collinear (1, 0) and interior (1, 1) dropped
  double area = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    area += a.x * b.y - a.y * b.x;
  }
  CHECK(area / 2 == doctest::Approx(4.0));  // positive: counter-clockwise
}

TEST_CASE("hull peeling") {
  std::vector<Point2> same(50, Point2{0.3, -1.0});
  auto point = hull_peel_region(same, 0.95);
  REQUIRE(point.vertices.size() == 1);
  CHECK(contains(point, {0.3, -1.0}));
  CHECK_FALSE(contains(point, {0.31, -1.0}));

  std::vector<Point2> grid;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) grid.push_back({double(i), double(j)});
  auto region = hull_peel_region(grid, 0.95);
  // Only the four corners are hull vertices; peeling the next layer
  // (eight points) would drop below 95%.
  CHECK(region.retained_count == 96);
  CHECK(region.retained_count >= 90);
  CHECK(region.total_count == 100);
  CHECK(contains(region, {4.5, 4.5}));
  CHECK(contains(region, {0.0, 5.0}));  // boundary is inside
  CHECK_FALSE(contains(region, {0.0, 0.0}));

  CHECK_THROWS_AS(hull_peel_region(grid, 1.0), Error);
  CHECK_THROWS_AS(hull_peel_region(grid, 0.0), Error);
}

TEST_CASE("hull peeling retains the target fraction of a Gaussian cloud") {
  Rng rng(71);
  std::normal_distribution<double> z;
  std::vector<Point2> pts(4000);
  for (auto& p : pts) p = {z(rng), 0.3 * z(rng)};
  auto region = hull_peel_region(pts, 0.95);
  CHECK(region.retained_count >= 3800);
  CHECK(region.retained_count < 3850);
  int inside = 0;
  for (const auto& p : pts) inside += contains(region, p);
  CHECK(inside >= region.retained_count);
}

TEST_CASE("Procrustes alignment") {
  Rng rng(72);
  Matrix v = random_orthonormal(rng, 10, 2);
  CHECK((procrustes_align(v, v) - Matrix::Identity(2, 2)).norm() < 1e-12);
  Matrix q = random_orthonormal(rng, 2, 2);
  CHECK((procrustes_align(v * q, v) - q.transpose()).norm() < 1e-10);

  Matrix a = random_orthonormal(rng, 10, 2);
  Matrix b = random_orthonormal(rng, 10, 2);
  Matrix r = procrustes_align(a, b);
  CHECK((r.transpose() * r - Matrix::Identity(2, 2)).norm() < 1e-10);
  const double found = (a * r - b).norm();
  double best = 1e300;
  Matrix flip = Matrix::Identity(2, 2);
  flip(1, 1) = -1.0;
  for (int i = 0; i < 5000; ++i) {
    const Matrix rot = rotation(2.0 * std::numbers::pi * i / 5000.0);
    best = std::min({best, (a * rot - b).norm(), (a * rot * flip - b).norm()});
  }
  CHECK(found <= best + 1e-6);
  CHECK(found >= best - 1e-4);
}
