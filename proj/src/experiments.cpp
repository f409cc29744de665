#include "covshare/experiments.hpp"

#include "covshare/error.hpp"
#include "covshare/parallel.hpp"
#include "covshare/posterior_summary.hpp"
#include "covshare/rank_select.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>

namespace covshare::sim {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

namespace {

std::vector<Matrix> stein_estimates(std::span<const GroupDataset> data, const SubspaceBasis& v,
                                    const std::vector<int>& ranks, const PipelineOptions& opts) {
  const std::vector<GibbsChain> chains = run_chains(data, v, ranks, opts.chain, {}, 1);
  std::vector<Matrix> out;
  out.reserve(chains.size());
  for (const auto& c : chains) out.push_back(stein_estimator(c, v));
  return out;
}

int clamp_dimension(int s, Index p) { return std::clamp(s, 1, static_cast<int>(p) - 1); }

}  // namespace

std::vector<Matrix> estimate_adaptive(std::span<const GroupDataset> data, const PipelineOptions& opts) {
  if (data.empty()) fail(ErrorKind::invalid_input, "need at least one group");
  const Index p = data[0].p();
  std::vector<int> ranks;
  int max_rank = 0;
  for (const auto& d : data) {
    ranks.push_back(estimate_group_rank(d).rank);
    max_rank = std::max(max_rank, ranks.back());
  }
  const int s = clamp_dimension(std::max(estimate_shared_dimension(data).rank, max_rank), p);
  for (int& r : ranks) r = std::min(r, s);
  const EmFitResult em = fit(data, s, opts.em);
  return stein_estimates(data, em.v_hat, ranks, opts);
}

std::vector<Matrix> estimate_pooled(std::span<const GroupDataset> data, const PipelineOptions& opts) {
  if (data.empty()) fail(ErrorKind::invalid_input, "need at least one group");
  const Index p = data[0].p();
  Matrix pooled = Matrix::Zero(p, p);
  int n = 0;
  for (const auto& d : data) {
    pooled += d.scatter;
    n += d.n;
  }
  const GroupDataset merged = GroupDataset::from_scatter(std::move(pooled), n);
  const int r = std::min(estimate_group_rank(merged).rank, static_cast<int>(p) - 1);
  const int s = clamp_dimension(r, p);
  const std::vector<GroupDataset> one{merged};
  const EmFitResult em = fit(one, s, opts.em);
  const std::vector<Matrix> est = stein_estimates(one, em.v_hat, {r}, opts);
  return std::vector<Matrix>(data.size(), est.front());
}

std::vector<Matrix> estimate_independent(std::span<const GroupDataset> data, const PipelineOptions& opts) {
  if (data.empty()) fail(ErrorKind::invalid_input, "need at least one group");
  // s = p: V V^T = I, so each group's eigenvectors range over the whole space.
  const Index p = data[0].p();
  const SubspaceBasis identity = SubspaceBasis::coordinate(p, p);
  std::vector<int> ranks;
  for (const auto& d : data) ranks.push_back(std::min(estimate_group_rank(d).rank, static_cast<int>(p)));
  return stein_estimates(data, identity, ranks, opts);
}

const CellSummary* ExperimentReport::find(const std::vector<std::string>& key) const {
  for (const auto& c : cells)
    if (c.key == key) return &c;
  return nullptr;
}

void summarize(ExperimentReport& report) {
  report.cells.clear();
  std::vector<std::vector<std::string>> order;
  std::map<std::vector<std::string>, std::vector<const ReportRow*>> groups;
  for (const auto& row : report.rows) {
    if (!groups.count(row.key)) order.push_back(row.key);
    groups[row.key].push_back(&row);
  }
  for (const auto& key : order) {
    const auto& rows = groups[key];
    CellSummary cell;
    cell.key = key;
    cell.count = static_cast<int>(rows.size());
    std::vector<double> v;
    for (const auto* r : rows) v.push_back(r->values.at(0));
    double sum = 0.0;
    for (double x : v) sum += x;
    cell.mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - cell.mean) * (x - cell.mean);
    cell.std_error = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size())) : 0.0;
    cell.q025 = quantile(v, 0.025);
    cell.q975 = quantile(v, 0.975);
    for (std::size_t j = 1; j < report.value_columns.size(); ++j) {
      double m = 0.0;
      for (const auto* r : rows) m += r->values.at(j);
      cell.extra_means[report.value_columns[j]] = m / static_cast<double>(rows.size());
    }
    report.cells.push_back(std::move(cell));
  }
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string format_number(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

}  // namespace

ExperimentReport run_table1(const Table1Options& opts) {
  if (opts.replications < 1) fail(ErrorKind::invalid_input, "replications must be >= 1");
  const auto t0 = Clock::now();
  ExperimentReport report;
  report.name = "table1";
  report.key_columns = {"data_model", "estimator"};
  report.value_columns = {"avg_stein_loss"};
  report.replications = opts.replications;
  report.seed = opts.seed;

  const std::size_t n_models = kTable1DataModels.size();
  const std::size_t jobs = n_models * static_cast<std::size_t>(opts.replications);
  std::vector<std::vector<ReportRow>> per_job(jobs);
  parallel_for(jobs, opts.pipeline.threads, [&](std::size_t job) {
    const std::size_t model = job % n_models;
    const int rep = static_cast<int>(job / n_models);
    GenConfig gen;
    gen.p = opts.p;
    gen.r = opts.r;
    gen.s = model == 2 ? opts.p : opts.r;
    gen.k_groups = opts.k_groups;
    gen.n_per_group = opts.n;
    gen.lambdas = Eigen::Map<const Vector>(opts.lambdas.data(), static_cast<Index>(opts.lambdas.size()));
    gen.sigma2 = {opts.sigma2};
    gen.subspace_mode = model == 0   ? SubspaceMode::shared_random
                        : model == 1 ? SubspaceMode::identical_covariance
                                     : SubspaceMode::full_rank_independent;
    gen.seed = derive_seed(opts.seed, static_cast<std::uint64_t>(rep), model);
    const GeneratedData g = generate_groups(gen);
    std::vector<Matrix> truths;
    for (const auto& t : g.truth.groups) truths.push_back(t.sigma());

    PipelineOptions pipe = opts.pipeline;
    pipe.chain.seed = derive_seed(opts.seed, static_cast<std::uint64_t>(rep), 100 + model);
    const std::vector<Matrix> adaptive = estimate_adaptive(g.groups, pipe);
    const std::vector<Matrix> pooled = estimate_pooled(g.groups, pipe);
    const std::vector<Matrix> indep = estimate_independent(g.groups, pipe);
    const std::vector<Matrix>* est[3] = {&adaptive, &pooled, &indep};
    for (std::size_t e = 0; e < 3; ++e) {
      per_job[job].push_back(ReportRow{{kTable1DataModels[model], kTable1Estimators[e]}, rep,
                                       {average_steins_loss(truths, *est[e])}});
    }
  });
  // deterministic order: data model, estimator, replication
  for (std::size_t model = 0; model < n_models; ++model)
    for (std::size_t e = 0; e < 3; ++e)
      for (int rep = 0; rep < opts.replications; ++rep)
        report.rows.push_back(per_job[static_cast<std::size_t>(rep) * n_models + model][e]);
  summarize(report);
  report.wall_seconds = seconds_since(t0);
  return report;
}

ExperimentReport run_coverage(const CoverageOptions& opts) {
  if (opts.replications < 1) fail(ErrorKind::invalid_input, "replications must be >= 1");
  const std::size_t kg = opts.ratios.size();
  std::vector<double> angles = opts.angles;
  if (angles.empty()) {
    const double q = std::numbers::pi / 4;
    angles = {q, -q, -q, 0.0, 0.0};
  }
  if (angles.size() != kg) fail(ErrorKind::invalid_input, "need one angle per ratio");
  const auto t0 = Clock::now();

  ExperimentReport report;
  report.name = "coverage";
  report.key_columns = {"group", "ratio"};
  report.value_columns = {"covered", "true_angle", "true_log_ratio", "retained_fraction"};
  report.replications = opts.replications;
  report.seed = opts.seed;

  GenConfig gen;
  gen.p = opts.p;
  gen.s = 2;
  gen.r = 2;
  gen.k_groups = static_cast<int>(kg);
  gen.n_per_group = opts.n;
  gen.lambdas = Eigen::Vector2d(opts.lambda1, opts.lambda1);
  gen.sigma2 = {1.0};
  gen.subspace_mode = SubspaceMode::shared_random;
  for (std::size_t k = 0; k < kg; ++k) {
    gen.group_lambdas.push_back(Eigen::Vector2d(opts.lambda1, opts.lambda1 / opts.ratios[k]));
    const double a = angles[k];
    Matrix o(2, 2);
    o << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    gen.group_eigvecs.push_back(o);
  }

  std::vector<std::vector<ReportRow>> per_rep(static_cast<std::size_t>(opts.replications));
  parallel_for(per_rep.size(), opts.pipeline.threads, [&](std::size_t rep) {
    GenConfig cfg = gen;
    cfg.seed = derive_seed(opts.seed, rep, 0);
    const GeneratedData g = generate_groups(cfg);
    const EmFitResult em = fit(g.groups, 2, opts.pipeline.em);
    const Matrix rot = procrustes_align(em.v_hat.matrix(), *g.truth.v);
    const SubspaceBasis aligned(em.v_hat.matrix() * rot, 1e-9);
    for (std::size_t k = 0; k < kg; ++k) {
      if (std::abs(opts.ratios[k] - 1.0) < 1e-12) continue;
      const GroupTruth& t = g.truth.groups[k];
      // truth on the fitted subspace: eigen-structure of Vh^T Sigma_k Vh / sigma2 - I
      const Matrix proj = aligned.matrix().transpose() * t.sigma() * aligned.matrix() / t.sigma2;
      Eigen::SelfAdjointEigenSolver<Matrix> es(proj);
      const Vector ev = es.eigenvalues().reverse().array() - 1.0;
      const Vector first = es.eigenvectors().col(1);
      const Point2 truth{fold_half_turn(std::atan2(first(1), first(0))),
                         std::log(std::max(ev(0), 1e-300) / std::max(ev(1), 1e-300))};

      ChainConfig cc = opts.pipeline.chain;
      cc.seed = derive_seed(opts.seed, rep, 1 + k);
      const GibbsChain chain = run_chain(g.groups[k], aligned, 2, cc, static_cast<int>(k));
      std::vector<Point2> pts;
      pts.reserve(chain.draws.size());
      for (const auto& s : summarize_chain(chain)) pts.push_back(Point2{s.angle, s.log_ratio});
      const PosteriorRegion region = hull_peel_region(pts, opts.target);
      per_rep[rep].push_back(ReportRow{{std::to_string(k), format_number(opts.ratios[k])},
                                       static_cast<int>(rep),
                                       {contains(region, truth) ? 1.0 : 0.0, truth.x, truth.y,
                                        static_cast<double>(region.retained_count) / region.total_count}});
    }
  });
  for (std::size_t k = 0; k < kg; ++k)
    for (const auto& rows : per_rep)
      for (const auto& row : rows)
        if (row.key[0] == std::to_string(k)) report.rows.push_back(row);
  summarize(report);
  for (auto& c : report.cells) c.std_error = std::sqrt(c.mean * (1.0 - c.mean) / std::max(1, c.count));
  report.wall_seconds = seconds_since(t0);
  return report;
}

std::string lambda_label(const std::vector<double>& lambdas) {
  std::string out;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (i) out += "/";
    out += format_number(lambdas[i]);
  }
  return out;
}

ExperimentReport run_accuracy_vs_k(const AccuracyOptions& opts) {
  if (opts.replications < 1 || opts.k_values.empty() || opts.lambda_sets.empty())
    fail(ErrorKind::invalid_input, "accuracy experiment needs nonempty grids and replications");
  const auto t0 = Clock::now();
  ExperimentReport report;
  report.name = "accuracy";
  report.key_columns = {"K", "lambda_set"};
  report.value_columns = {"accuracy", "benchmark"};
  report.replications = opts.replications;
  report.seed = opts.seed;

  struct Job {
    std::size_t ki, li;
    int rep;
  };
  std::vector<Job> jobs;
  for (std::size_t ki = 0; ki < opts.k_values.size(); ++ki)
    for (std::size_t li = 0; li < opts.lambda_sets.size(); ++li)
      for (int rep = 0; rep < opts.replications; ++rep) jobs.push_back({ki, li, rep});
  std::vector<ReportRow> rows(jobs.size());
  const double gamma_ratio = static_cast<double>(opts.p) / static_cast<double>(opts.n);
  parallel_for(jobs.size(), opts.threads, [&](std::size_t j) {
    const Job& job = jobs[j];
    const int k = opts.k_values[job.ki];
    const std::vector<double>& lam = opts.lambda_sets[job.li];
    GenConfig gen;
    gen.p = opts.p;
    gen.s = static_cast<int>(lam.size());
    gen.r = gen.s;
    gen.k_groups = k;
    gen.n_per_group = opts.n;
    gen.lambdas = Eigen::Map<const Vector>(lam.data(), static_cast<Index>(lam.size()));
    gen.sigma2 = {1.0};
    gen.subspace_mode = SubspaceMode::shared_random;
    gen.seed = derive_seed(opts.seed, static_cast<std::uint64_t>(job.rep), job.ki * 1000 + job.li);
    const GeneratedData g = generate_groups(gen);
    const EmFitResult em = fit(g.groups, gen.s, opts.em);
    std::vector<double> pop(lam.size());
    for (std::size_t i = 0; i < lam.size(); ++i) pop[i] = lam[i] + 1.0;
    const BenchmarkValue bench = pooled_accuracy_benchmark(pop, gamma_ratio, k);
    rows[j] = ReportRow{{std::to_string(k), lambda_label(lam)},
                        job.rep,
                        {subspace_accuracy(em.v_hat.matrix(), *g.truth.v), bench.value}};
  });
  report.rows = std::move(rows);
  summarize(report);
  report.wall_seconds = seconds_since(t0);
  return report;
}

ExperimentReport run_eigenvalue_bias(const BiasOptions& opts) {
  if (opts.replications < 1) fail(ErrorKind::invalid_input, "replications must be >= 1");
  const auto t0 = Clock::now();
  ExperimentReport report;
  report.name = "bias";
  report.key_columns = {"population_eigenvalue"};
  report.value_columns = {"top_eigenvalue", "prediction"};
  report.replications = opts.replications;
  report.seed = opts.seed;
  const double alpha = static_cast<double>(opts.p) / static_cast<double>(opts.n);
  const BiasPrediction pred = eigenvalue_bias_prediction(opts.population_eigenvalue, opts.sigma2, alpha);
  for (int rep = 0; rep < opts.replications; ++rep) {
    Rng rng(derive_seed(opts.seed, static_cast<std::uint64_t>(rep)));
    GroupTruth t;
    t.u = sample_uniform_stiefel(rng, opts.p, 1).matrix();
    t.lambda = Vector::Constant(1, opts.population_eigenvalue - 1.0);
    t.sigma2 = opts.sigma2;
    const Matrix y = sample_rows(rng, t, opts.n);
    // eigenvalues of Y^T Y / n equal those of Y Y^T / n
    const Matrix gram = y * y.transpose() / (static_cast<double>(opts.n) * opts.sigma2);
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
    report.rows.push_back(ReportRow{{format_number(opts.population_eigenvalue)}, rep,
                                    {es.eigenvalues().maxCoeff(), pred.value}});
  }
  summarize(report);
  report.wall_seconds = seconds_since(t0);
  return report;
}

}  // namespace covshare::sim
