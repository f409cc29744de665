#include "covshare/error.hpp"
#include "covshare/stiefel.hpp"
#include "test_support.hpp"

#include <doctest.h>

using namespace covshare;
using covshare::testing::gaussian;
using covshare::testing::polar_ascent;
using covshare::testing::random_orthonormal;
using covshare::testing::random_spd;

namespace {

Matrix random_symmetric(Rng& rng, Index s) {
  Matrix a = gaussian(rng, s, s);
  return 0.5 * (a + a.transpose());
}

}  // namespace

TEST_CASE("euclidean gradient") {
  Rng rng(21);
  Matrix s = random_spd(rng, 6);
  auto v = SubspaceBasis(random_orthonormal(rng, 6, 2));

  TraceObjective ident;
  ident.add_term(s, Matrix::Identity(2, 2));
  CHECK((euclidean_gradient(ident, v) - s * v.matrix()).norm() < 1e-12);

  TraceObjective zero;
  zero.add_term(s, Matrix::Zero(2, 2));
  CHECK(euclidean_gradient(zero, v).norm() == 0.0);

  TraceObjective obj;
  obj.add_term(s, random_symmetric(rng, 2));
  obj.add_term(random_spd(rng, 6), random_symmetric(rng, 2));
  const Matrix g = euclidean_gradient(obj, v);
  const double h = 1e-6;
  Matrix fd(6, 2);
  for (Index i = 0; i < 6; ++i)
    for (Index j = 0; j < 2; ++j) {
      Matrix plus = v.matrix(), minus = v.matrix();
      plus(i, j) += h;
      minus(i, j) -= h;
      fd(i, j) = (obj.value(plus) - obj.value(minus)) / (2 * h);
    }
  CHECK((g - fd).norm() <= 1e-6 * (1.0 + g.norm()));
  CHECK(obj.value(v.matrix()) == doctest::Approx(obj.value_by_traces(v.matrix())));
}

TEST_CASE("factored trace terms agree with the dense scatter") {
  Rng rng(22);
  Matrix y = gaussian(rng, 4, 12);
  auto v = SubspaceBasis(random_orthonormal(rng, 12, 3));
  Matrix w = random_symmetric(rng, 3);
  TraceObjective dense, factored;
  dense.add_term(y.transpose() * y, w);
  factored.add_term(y.transpose() * y, w, y);
  CHECK(dense.value(v.matrix()) == doctest::Approx(factored.value(v.matrix())));
  CHECK((dense.gradient(v.matrix()) - factored.gradient(v.matrix())).norm() < 1e-10);
}

TEST_CASE("cayley step") {
  Rng rng(23);
  auto v = SubspaceBasis(random_orthonormal(rng, 8, 2));
  Matrix g = gaussian(rng, 8, 2);
  auto same = cayley_step(v, g, 0.0);
  REQUIRE(same);
  CHECK(same->matrix() == v.matrix());

  for (double tau : {0.01, 0.3, 2.0, 25.0}) {
    auto next = cayley_step(v, g, tau);
    REQUIRE(next);
    CHECK(orthonormality_error(next->matrix()) <= 1e-9);
    Matrix w = g * v.matrix().transpose() - v.matrix() * g.transpose();
    Matrix id = Matrix::Identity(8, 8);
    Matrix dense = (id + 0.5 * tau * w).lu().solve((id - 0.5 * tau * w) * v.matrix());
    CHECK((next->matrix() - dense).norm() < 1e-10);
  }

  // p = 2, s = 1, V = e1: W = [[0, -g2], [g2, 0]] and the map is a plane
  // rotation with half-angle tangent b = tau g2 / 2.
  auto e1 = SubspaceBasis::coordinate(2, 1);
  Matrix g2(2, 1);
  g2 << 0.7, 1.3;
  const double tau = 0.8, b = tau * 1.3 / 2.0;
  auto rot = cayley_step(e1, g2, tau);
  REQUIRE(rot);
  CHECK(rot->matrix()(0, 0) == doctest::Approx((1 - b * b) / (1 + b * b)));
  CHECK(rot->matrix()(1, 0) == doctest::Approx(-2 * b / (1 + b * b)));
}

TEST_CASE("maximize reaches the top eigenspace") {
  Rng rng(24);
  Matrix s = random_spd(rng, 20);
  TraceObjective obj;
  obj.add_term(s, Matrix::Identity(3, 3));
  auto v0 = SubspaceBasis(random_orthonormal(rng, 20, 3));
  auto result = maximize(obj, v0, {.max_iters = 5000, .grad_tol = 1e-10});

  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  const Vector top = eig.eigenvalues().tail(3);
  CHECK(result.trace.back() == doctest::Approx(0.5 * top.sum()).epsilon(1e-9));
  Matrix u = eig.eigenvectors().rightCols(3);
  Matrix proj = result.v.matrix() * result.v.matrix().transpose();
  CHECK((proj - u * u.transpose()).norm() < 1e-4);
  for (std::size_t i = 1; i < result.trace.size(); ++i) CHECK(result.trace[i] >= result.trace[i - 1] - 1e-12);
}

TEST_CASE("maximize on a flat objective returns the start") {
  Rng rng(25);
  TraceObjective obj;
  obj.add_term(random_spd(rng, 5), Matrix::Zero(2, 2));
  auto v0 = SubspaceBasis(random_orthonormal(rng, 5, 2));
  auto result = maximize(obj, v0);
  CHECK(result.iterations == 0);
  CHECK(result.v.matrix() == v0.matrix());
}

TEST_CASE("maximize matches a random-restart oracle on a two-term objective") {
  Rng rng(26);
  TraceObjective obj;
  obj.add_term(random_spd(rng, 10), random_symmetric(rng, 2));
  obj.add_term(random_spd(rng, 10), random_symmetric(rng, 2));

  double best = -1e300;
  for (int restart = 0; restart < 200; ++restart)
    best = std::max(best, polar_ascent(obj, random_orthonormal(rng, 10, 2), 2e-3, 1500));

  double found = -1e300;
  for (int start = 0; start < 5; ++start) {
    auto r = maximize(obj, SubspaceBasis(random_orthonormal(rng, 10, 2)), {.max_iters = 5000, .grad_tol = 1e-10});
    found = std::max(found, r.trace.back());
  }
  CHECK(found >= best - 1e-4);
}
