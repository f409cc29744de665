#include "covshare/error.hpp"
#include "covshare/rank_select.hpp"
#include "covshare/sim.hpp"
#include "test_support.hpp"

#include <doctest.h>

using namespace covshare;
using covshare::testing::gaussian;

namespace {

sim::GenConfig planted(int p, int s, int n, int k, sim::SubspaceMode mode, std::uint64_t seed, double lambda2 = 25.0) {
  sim::GenConfig cfg;
  cfg.p = p;
  cfg.s = s;
  cfg.r = 2;
  cfg.k_groups = k;
  cfg.n_per_group = n;
  cfg.lambdas = (Vector(2) << 250.0, lambda2).finished();
  cfg.sigma2 = {1.0};
  cfg.subspace_mode = mode;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("threshold coefficient") {
  CHECK(gavish_donoho_omega(1.0) == doctest::Approx(2.86));
  CHECK(gavish_donoho_omega(0.25) == doctest::Approx(0.56 / 64 - 0.95 / 16 + 1.82 / 4 + 1.43));
}

TEST_CASE("threshold rule on explicit singular values") {
  // square case: threshold = 2.86 * median
  const std::vector<double> sv{100.0, 10.0, 3.0, 2.0, 1.0, 1.0, 1.0, 0.5};
  auto est = gavish_donoho_rank(sv, 8, 8);
  CHECK(est.beta == doctest::Approx(1.0));
  CHECK(est.median_sv == doctest::Approx(1.5));
  CHECK(est.threshold == doctest::Approx(2.86 * 1.5));
  CHECK(est.rank == 2);
  CHECK_THROWS_AS(gavish_donoho_rank(std::vector<double>{0.0, 0.0}, 2, 2), Error);
}

TEST_CASE("pure noise yields rank zero") {
  Rng rng(81);
  int zero = 0;
  for (int rep = 0; rep < 20; ++rep) zero += estimate_group_rank(scatter_from_data(gaussian(rng, 200, 200))).rank == 0;
  CHECK(zero >= 19);
}

TEST_CASE("planted rank two is recovered") {
  int hits = 0;
  for (int rep = 0; rep < 20; ++rep) {
    auto gen = sim::generate_groups(planted(200, 2, 50, 1, sim::SubspaceMode::shared_random, 100 + rep));
    hits += estimate_group_rank(gen.groups[0]).rank == 2;
  }
  CHECK(hits >= 19);
}

TEST_CASE("scatter-only input agrees with raw singular values") {
  auto gen = sim::generate_groups(planted(60, 2, 30, 1, sim::SubspaceMode::shared_random, 5));
  GroupDataset scatter_only{gen.groups[0].scatter, gen.groups[0].n, std::nullopt};
  auto a = estimate_group_rank(gen.groups[0]);
  auto b = estimate_group_rank(scatter_only);
  CHECK(a.rank == b.rank);
  CHECK(a.median_sv == doctest::Approx(b.median_sv).epsilon(1e-8));
}

TEST_CASE("zero data is rejected") {
  CHECK_THROWS_AS(estimate_group_rank(scatter_from_data(Matrix::Zero(5, 4))), Error);
}

TEST_CASE("shared dimension") {
  int identical = 0, near_rk = 0;
  for (int rep = 0; rep < 20; ++rep) {
    auto same = sim::generate_groups(planted(200, 2, 50, 10, sim::SubspaceMode::shared_random, 200 + rep));
    identical += estimate_shared_dimension(same.groups).rank == 2;
    // Pooling dilutes each group's spikes by K; the second spikes must stay
    // above the threshold for all rK directions to be visible.
    auto indep =
        sim::generate_groups(planted(200, 200, 50, 10, sim::SubspaceMode::full_rank_independent, 300 + rep, 100.0));
    near_rk += std::abs(estimate_shared_dimension(indep.groups).rank - 20) <= 3;
  }
  CHECK(identical >= 18);
  CHECK(near_rk >= 16);

  auto one = sim::generate_groups(planted(80, 2, 40, 1, sim::SubspaceMode::shared_random, 9));
  CHECK(estimate_shared_dimension(one.groups).rank == estimate_group_rank(one.groups[0]).rank);
}
