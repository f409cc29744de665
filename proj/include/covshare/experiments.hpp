#pragma once

// Desk-scale reproductions of the risk, coverage and subspace-accuracy
// experiments, plus the estimator pipelines they compare.

#include "covshare/gibbs.hpp"
#include "covshare/sim.hpp"
#include "covshare/subspace_em.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace covshare::sim {

/// splitmix64-based seed derivation for independent replication streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

struct PipelineOptions {
  ChainConfig chain{};
  EmOptions em{};
  int threads = 1;
};

/// Ranks r_k per group, s from the pooled threshold, EM for V, one chain per
/// group and the Stein-loss Bayes estimator of each Sigma_k.
std::vector<Matrix> estimate_adaptive(std::span<const GroupDataset> data, const PipelineOptions& opts);
/// One spiked model for the pooled scatter (sum S_k, sum n_k); same estimate for every group.
std::vector<Matrix> estimate_pooled(std::span<const GroupDataset> data, const PipelineOptions& opts);
/// Full-rank model (s = p, V = I): each group alone, rank r_k, one chain with
/// eigenvectors free over the whole space.
std::vector<Matrix> estimate_independent(std::span<const GroupDataset> data, const PipelineOptions& opts);

struct ReportRow {
  std::vector<std::string> key;
  int replication = 0;
  std::vector<double> values;
};

struct CellSummary {
  std::vector<std::string> key;
  int count = 0;
  double mean = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  double std_error = 0.0;
  std::map<std::string, double> extra_means;  // means of the other value columns
};

struct ExperimentReport {
  std::string name;
  std::vector<std::string> key_columns;
  std::vector<std::string> value_columns;
  std::vector<ReportRow> rows;
  std::vector<CellSummary> cells;
  int replications = 0;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;

  const CellSummary* find(const std::vector<std::string>& key) const;
};

/// Groups rows by key (in first-appearance order) and summarizes value column 0.
void summarize(ExperimentReport& report);

struct Table1Options {
  int p = 200;
  int r = 2;
  int n = 50;
  int k_groups = 10;
  std::vector<double> lambdas{250.0, 25.0};
  double sigma2 = 1.0;
  int replications = 10;
  std::uint64_t seed = 1;
  PipelineOptions pipeline{};
};

inline const std::vector<std::string> kTable1DataModels{"s=r=2", "Sigma_k=Sigma", "s=p"};
inline const std::vector<std::string> kTable1Estimators{"adaptive", "pooled", "s_hat=p"};

/// Average Stein's loss for every (data model, estimator) cell.
ExperimentReport run_table1(const Table1Options& opts);

struct CoverageOptions {
  int p = 200;
  int n = 50;
  double lambda1 = 100.0;
  std::vector<double> ratios{10.0, 10.0, 3.0, 3.0, 1.0};
  std::vector<double> angles;  // default: pi/4, -pi/4, -pi/4, 0, 0
  double target = 0.95;
  int replications = 200;
  std::uint64_t seed = 2;
  PipelineOptions pipeline{};
};

/// Frequentist coverage of hull-peeled 95% regions for (angle, log ratio),
/// with truth computed on the Procrustes-aligned fitted basis. Groups whose
/// eigenvalue ratio is 1 are skipped.
ExperimentReport run_coverage(const CoverageOptions& opts);

struct AccuracyOptions {
  int p = 200;
  int n = 50;
  std::vector<int> k_values{1, 2, 4, 8};
  std::vector<std::vector<double>> lambda_sets{{10.0, 10.0}, {25.0, 5.0}, {100.0, 5.0}};
  int replications = 20;
  std::uint64_t seed = 3;
  EmOptions em{};
  int threads = 1;
};

std::string lambda_label(const std::vector<double>& lambdas);

/// Subspace accuracy of the EM estimate (s = 2) against the pooled benchmark
/// evaluated at the population eigenvalues lambda_i + 1.
ExperimentReport run_accuracy_vs_k(const AccuracyOptions& opts);

struct BiasOptions {
  int p = 400;
  int n = 100;
  double population_eigenvalue = 9.0;  // of Sigma / sigma2
  double sigma2 = 1.0;
  int replications = 20;
  std::uint64_t seed = 4;
};

/// Top eigenvalue of S / (n sigma2) against its predicted limit.
ExperimentReport run_eigenvalue_bias(const BiasOptions& opts);

}  // namespace covshare::sim
