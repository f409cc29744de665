#pragma once

// Gibbs sampler for (sigma2_k, O_k, Omega_k) given a fixed shared subspace.
// Each group's posterior is conditionally independent given V, so one chain
// is run per group.

#include "covshare/model.hpp"
#include "covshare/samplers.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace covshare {

struct ChainConfig {
  int n_iter = 5000;
  int burn_in = 1000;
  int thin = 2;
  std::uint64_t seed = 0;

  void validate() const;
  int draw_count() const { return (n_iter - burn_in) / thin; }
};

/// Sufficient statistics of one group on the subspace.
struct ProjectedGroup {
  Matrix vsv;      // V^T S V
  double trace_s;  // tr(S)
  Index p;
  int n;
  // F with V^T S V = F^T F, kept when it is much wider than tall (n << s) so
  // that Bingham updates can work with n x n eigenproblems.
  std::optional<WideFactor> factor;

  static ProjectedGroup from(const SubspaceBasis& v, const GroupDataset& data);
};

struct GibbsChain {
  std::vector<GroupSpikeParams> draws;
  int group_id = 0;
  ChainConfig config;
};

/// Starting point: O = top-r eigenvectors of V^T S V, sigma2 from the
/// residual trace, omega at the conditional mode.
GroupSpikeParams initial_state(const ProjectedGroup& g, Index r);

/// One systematic scan sigma2 -> O -> omega_1..omega_r, followed by sorting
/// omega in decreasing order (columns of O permuted along) and sign
/// canonicalization of O.
GroupSpikeParams gibbs_step(Rng& rng, const GroupSpikeParams& state, const ProjectedGroup& g);
GroupSpikeParams gibbs_step(Rng& rng, const GroupSpikeParams& state, const SubspaceBasis& v,
                            const GroupDataset& data);

GibbsChain run_chain(const GroupDataset& data, const SubspaceBasis& v, Index r, const ChainConfig& config,
                     int group_id = 0, std::optional<GroupSpikeParams> init = std::nullopt);

/// One chain per group; group k is seeded with config.seed ^ ids[k]
/// (ids defaults to 0..K-1). Runs on up to `threads` workers.
std::vector<GibbsChain> run_chains(std::span<const GroupDataset> data, const SubspaceBasis& v,
                                   std::span<const int> ranks, const ChainConfig& config,
                                   std::span<const int> ids = {}, int threads = 0);

/// Posterior mean of the precision in structured form c I - V A V^T.
struct AveragePrecision {
  double c = 0.0;  // mean of 1/sigma2
  Matrix a;        // mean of O Omega O^T / sigma2 (s x s)
};

AveragePrecision average_precision(std::span<const GroupSpikeParams> draws);

/// Bayes estimator under Stein's loss, E[Sigma^{-1} | S]^{-1}, inverted on
/// the subspace: (1/c)(I - VV^T) + V (c I - A)^{-1} V^T.
Matrix stein_estimator(const GibbsChain& chain, const SubspaceBasis& v);
Matrix stein_estimator(std::span<const GroupSpikeParams> draws, const SubspaceBasis& v);

// Block model with spikes shared across groups on the trailing s - r
// coordinates of the subspace.

struct PartitionedChains {
  std::vector<std::vector<PartitionedPsi>> draws;  // [group][draw]
};

PartitionedChains run_partitioned_chains(std::span<const GroupDataset> data, const SubspaceBasis& v,
                                         Index r, const ChainConfig& config);

}  // namespace covshare
