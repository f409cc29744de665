#include "covshare/error.hpp"
#include "covshare/sim.hpp"
#include "covshare/subspace_em.hpp"
#include "test_support.hpp"

#include <doctest.h>

using namespace covshare;
using covshare::testing::gaussian;
using covshare::testing::polar_ascent;
using covshare::testing::random_orthonormal;
using covshare::testing::random_spd;

namespace {

sim::GeneratedData spiked(int p, int s, int n, int k, std::vector<double> lambdas, std::uint64_t seed,
                          sim::SubspaceMode mode = sim::SubspaceMode::shared_random) {
  sim::GenConfig cfg;
  cfg.p = p;
  cfg.s = s;
  cfg.r = static_cast<int>(lambdas.size());
  cfg.k_groups = k;
  cfg.n_per_group = n;
  cfg.lambdas = Eigen::Map<Vector>(lambdas.data(), lambdas.size());
  cfg.sigma2 = {1.0};
  cfg.subspace_mode = mode;
  cfg.seed = seed;
  return sim::generate_groups(cfg);
}

EmOptions tight(int max_iters) {
  EmOptions o;
  o.max_iters = max_iters;
  o.tol = 1e-12;
  return o;
}

Matrix diag(std::initializer_list<double> d) {
  Vector v(d.size());
  Index i = 0;
  for (double x : d) v(i++) = x;
  return v.asDiagonal();
}

}  // namespace

TEST_CASE("e_step") {
  std::vector<GroupDataset> iso{{5.0 * Matrix::Identity(4, 4), 5, std::nullopt}};
  auto ex = e_step(SubspaceBasis::coordinate(4, 2), iso);
  CHECK(ex.inv_m[0].isApprox(Matrix::Identity(2, 2)));
  CHECK(ex.inv_sigma2[0] == doctest::Approx(1.0));

  std::vector<GroupDataset> d{{diag({4, 1, 1}), 2, std::nullopt}};
  ex = e_step(SubspaceBasis::coordinate(3, 1), d);
  CHECK(ex.inv_m[0](0, 0) == doctest::Approx(0.5));
  CHECK(ex.inv_sigma2[0] == doctest::Approx(2.0));

  std::vector<GroupDataset> deficient{{diag({1, 1, 0, 0}), 2, std::nullopt}};
  Matrix null_dirs = Matrix::Zero(4, 1);
  null_dirs(3, 0) = 1.0;
  try {
    e_step(SubspaceBasis(null_dirs), deficient);
    FAIL("expected a singular projection error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::degenerate_projection);
  }
}

TEST_CASE("sigma2 plug-in") {
  GroupDataset iso{7.0 * Matrix::Identity(5, 5), 7, std::nullopt};
  CHECK(sigma2_plugin(SubspaceBasis::coordinate(5, 2), iso) == doctest::Approx(1.0));
  GroupDataset twice{14.0 * Matrix::Identity(5, 5), 7, std::nullopt};
  CHECK(sigma2_plugin(SubspaceBasis::coordinate(5, 2), twice) == doctest::Approx(2.0));
  GroupDataset d{diag({4, 1, 1}), 2, std::nullopt};
  CHECK(sigma2_plugin(SubspaceBasis::coordinate(3, 1), d) == doctest::Approx(0.5));
}

TEST_CASE("m_step") {
  Rng rng(31);
  std::vector<GroupDataset> one{{random_spd(rng, 8), 10, std::nullopt}};
  auto v0 = SubspaceBasis(random_orthonormal(rng, 8, 2));

  // B = 2 I - 0.5 I: maximizer is the top eigenspace of S.
  EStepExpectations ex{{0.5 * Matrix::Identity(2, 2)}, {2.0}};
  auto v = m_step(ex, one, v0, {.max_iters = 5000, .grad_tol = 1e-11});
  Eigen::SelfAdjointEigenSolver<Matrix> eig(one[0].scatter);
  Matrix top = eig.eigenvectors().rightCols(2);
  CHECK((v.projector() - top * top.transpose()).norm() < 1e-5);

  EStepExpectations flat{{Matrix::Identity(2, 2)}, {1.0}};
  CHECK(m_step(flat, one, v0).matrix() == v0.matrix());

  std::vector<GroupDataset> two{{random_spd(rng, 8), 10, std::nullopt}, {random_spd(rng, 8), 12, std::nullopt}};
  auto ex2 = e_step(v0, two);
  auto obj = m_step_objective(ex2, two);
  double best = -1e300;
  for (int restart = 0; restart < 200; ++restart)
    best = std::max(best, polar_ascent(obj, random_orthonormal(rng, 8, 2), 1e-3, 1500));
  double found = -1e300;
  for (int start = 0; start < 5; ++start) {
    auto vs = m_step(ex2, two, SubspaceBasis(random_orthonormal(rng, 8, 2)), {.max_iters = 5000, .grad_tol = 1e-10});
    found = std::max(found, obj.value(vs.matrix()));
  }
  CHECK(found >= best - 1e-4 * (1.0 + std::abs(best)));
}

TEST_CASE("log marginal likelihood") {
  Rng rng(32);
  std::vector<GroupDataset> data{{random_spd(rng, 6), 9, std::nullopt}, {random_spd(rng, 6), 4, std::nullopt}};
  auto v = SubspaceBasis(random_orthonormal(rng, 6, 3));
  Matrix q = random_orthonormal(rng, 3, 3);
  CHECK(log_marginal_likelihood(SubspaceBasis(v.matrix() * q), data) ==
        doctest::Approx(log_marginal_likelihood(v, data)).epsilon(1e-12));
}

TEST_CASE("log marginal likelihood against quadrature over the nuisance scales") {
  // p = 4, s = 1: Y V ~ N(0, m), residual ~ N(0, sigma2) on p - 1 axes, with
  // Jeffreys priors 1/m and 1/sigma2. Integrate each scale on a log grid.
  const int n = 6;
  const int p = 4;
  std::vector<GroupDataset> data{{diag({9.0, 4.0, 2.0, 1.0}), n, std::nullopt}};
  auto log_integral = [](double shape, double a) {
    // log of int exp(-shape u - a e^{-u} / 2) du
    const double mode = std::log(a / (2.0 * shape));
    auto f = [&](double u) { return -shape * u - 0.5 * a * std::exp(-u); };
    const double fmax = f(mode);
    const double val = covshare::testing::simpson([&](double u) { return std::exp(f(u) - fmax); }, mode - 12.0,
                                                  mode + 40.0, 20000);
    return fmax + std::log(val);
  };
  auto quadrature = [&](const SubspaceBasis& v) {
    const double a = (v.matrix().transpose() * data[0].scatter * v.matrix())(0, 0);
    const double rt = data[0].scatter.trace() - a;
    return log_integral(n / 2.0, a) + log_integral(n * (p - 1) / 2.0, rt);
  };
  Matrix v1(4, 1), v2(4, 1);
  v1 << 1, 0.3, 0.1, 0;
  v2 << 0.2, -0.5, 0.7, 0.4;
  auto b1 = SubspaceBasis::orthonormalized(v1);
  auto b2 = SubspaceBasis::orthonormalized(v2);
  const double exact = log_marginal_likelihood(b1, data) - log_marginal_likelihood(b2, data);
  CHECK(exact == doctest::Approx(quadrature(b1) - quadrature(b2)).epsilon(1e-8));
}

TEST_CASE("log marginal likelihood prefers the true subspace") {
  auto gen = spiked(30, 2, 40, 3, {100.0, 100.0}, 5);
  auto truth = SubspaceBasis(*gen.truth.v);
  Rng rng(33);
  for (int t = 0; t < 10; ++t) {
    auto v = SubspaceBasis(random_orthonormal(rng, 30, 2));
    CHECK(log_marginal_likelihood(truth, gen.groups) > log_marginal_likelihood(v, gen.groups));
  }
}

TEST_CASE("EM recovers a planted shared subspace") {
  auto gen = spiked(50, 2, 100, 5, {250.0, 25.0}, 7);
  auto result = fit(gen.groups, 2);
  CHECK(sim::subspace_accuracy(result.v_hat.matrix(), *gen.truth.v) >= 0.95);
  for (std::size_t i = 1; i < result.objective_trace.size(); ++i)
    CHECK(result.objective_trace[i] >= result.objective_trace[i - 1] - 1e-10 * std::abs(result.objective_trace[i]));
}

TEST_CASE("EM with one group matches the sample eigenvectors") {
  auto gen = spiked(40, 2, 80, 1, {400.0, 100.0}, 8);
  auto result = fit(gen.groups, 2, tight(500));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gen.groups[0].scatter);
  Matrix top = eig.eigenvectors().rightCols(2);
  Eigen::JacobiSVD<Matrix> svd(top.transpose() * result.v_hat.matrix());
  // smallest cosine of the principal angles
  const double cos_min = svd.singularValues().minCoeff();
  CHECK(std::acos(std::min(1.0, cos_min)) <= 1e-3);
}

TEST_CASE("EM on pure noise terminates") {
  std::vector<GroupDataset> noise{{20.0 * Matrix::Identity(6, 6), 20, std::nullopt},
                                  {10.0 * Matrix::Identity(6, 6), 10, std::nullopt}};
  auto result = fit(noise, 2);
  CHECK(orthonormality_error(result.v_hat.matrix()) < 1e-10);
}

TEST_CASE("EM is equivariant under rotation and scaling of the data") {
  auto gen = spiked(20, 2, 30, 3, {50.0, 10.0}, 9);
  auto base = fit(gen.groups, 2, tight(400));

  Rng rng(34);
  Matrix r = random_orthonormal(rng, 20, 20);
  std::vector<GroupDataset> rotated, scaled;
  for (const auto& g : gen.groups) {
    rotated.push_back({r * g.scatter * r.transpose(), g.n, std::nullopt});
    scaled.push_back({3.5 * g.scatter, g.n, std::nullopt});
  }
  EmOptions ro = tight(400);
  ro.init = SubspaceBasis(r * pooled_principal_subspace(gen.groups, 2).matrix());
  auto rot = fit(rotated, 2, ro);
  auto sc = fit(scaled, 2, tight(400));
  Matrix expected = r * base.v_hat.projector() * r.transpose();
  CHECK((rot.v_hat.projector() - expected).norm() < 1e-5);
  CHECK((sc.v_hat.projector() - base.v_hat.projector()).norm() < 1e-5);
}

TEST_CASE("goodness of fit") {
  Rng rng(35);
  Matrix s = random_spd(rng, 8);
  GroupDataset d{s, 10, std::nullopt};
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  auto top = SubspaceBasis(eig.eigenvectors().rightCols(2));
  CHECK(goodness_of_fit(d, top, 0.0) == doctest::Approx(1.0).epsilon(1e-12));

  // Strong spikes on axes 0, 1; a subspace on quiet axes captures almost nothing.
  GroupDataset spiky{diag({1000, 800, 1, 1, 1, 1}), 10, std::nullopt};
  Matrix quiet = Matrix::Zero(6, 2);
  quiet(4, 0) = quiet(5, 1) = 1.0;
  const double low = goodness_of_fit(spiky, SubspaceBasis(quiet), 0.0);
  CHECK(low == doctest::Approx(2.0 / 1800.0));
  CHECK(low < 0.01);

  // rotation of the basis within its span and joint rotation of data and basis
  auto v = SubspaceBasis(random_orthonormal(rng, 8, 2));
  const double g0 = goodness_of_fit(d, v, 0.1);
  Matrix q = random_orthonormal(rng, 2, 2);
  CHECK(goodness_of_fit(d, SubspaceBasis(v.matrix() * q), 0.1) == doctest::Approx(g0).epsilon(1e-10));
  Matrix r = random_orthonormal(rng, 8, 8);
  GroupDataset rd{r * s * r.transpose(), 10, std::nullopt};
  CHECK(goodness_of_fit(rd, SubspaceBasis(r * v.matrix()), 0.1) == doctest::Approx(g0).epsilon(1e-10));
}

TEST_CASE("goodness of fit flags an undersized shared subspace") {
  auto gen = spiked(200, 200, 50, 10, {250.0, 25.0}, 11, sim::SubspaceMode::full_rank_independent);
  auto gammas = [&](int s_hat) {
    auto result = fit(gen.groups, s_hat);
    std::vector<double> out;
    for (const auto& g : gen.groups) out.push_back(goodness_of_fit(g, result.v_hat, sigma2_plugin(result.v_hat, g)));
    return out;
  };
  auto small = gammas(5);
  auto large = gammas(20);
  int low = 0;
  for (double g : small) low += g < 0.7;
  CHECK(low >= 3);
  for (double g : large) CHECK(g >= 0.9);
}
