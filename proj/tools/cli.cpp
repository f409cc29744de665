#include "cli.hpp"

#include "covshare/error.hpp"
#include "covshare/experiments.hpp"
#include "covshare/gibbs.hpp"
#include "covshare/io.hpp"
#include "covshare/parallel.hpp"
#include "covshare/posterior_summary.hpp"
#include "covshare/rank_select.hpp"
#include "covshare/subspace_em.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#ifndef COVSHARE_VERSION
#define COVSHARE_VERSION "0.0.0"
#endif

namespace covshare::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// Shared input handling for commands that read group files.
struct GroupInputs {
  std::vector<std::string> files;
  bool scatter = false;
  std::vector<int> n;
  bool demean = false;

  void add_to(CLI::App& cmd) {
    cmd.add_option("inputs", files, "Group data CSVs (rows = observations), or scatter matrices with --scatter")
        ->required()
        ->check(CLI::ExistingFile);
    cmd.add_flag("--scatter", scatter, "Inputs are p x p scatter matrices Y^T Y");
    cmd.add_option("--n", n, "Sample sizes for scatter inputs (one per file, or one shared)");
    cmd.add_flag("--demean", demean, "Subtract column means (recorded n drops by one)");
  }

  std::vector<GroupDataset> load() const {
    if (scatter && n.empty()) throw UsageError("--scatter requires --n");
    if (!scatter && !n.empty()) throw UsageError("--n only applies with --scatter");
    if (scatter && demean) throw UsageError("--demean needs raw data, not scatter matrices");
    if (n.size() > 1 && n.size() != files.size()) throw UsageError("--n needs one value per input file");
    std::vector<GroupDataset> out;
    for (std::size_t k = 0; k < files.size(); ++k) {
      const Matrix m = io::read_csv_matrix(files[k]).values;
      GroupDataset d;
      if (scatter) {
        d = GroupDataset::from_scatter(m, n.size() == 1 ? n[0] : n[k]);
      } else if (demean) {
        if (m.rows() < 2) fail(ErrorKind::invalid_input, files[k] + ": --demean needs at least two rows");
        const Matrix centered = m.rowwise() - m.colwise().mean();
        d = GroupDataset::from_scatter(centered.transpose() * centered, static_cast<int>(m.rows()) - 1);
      } else {
        d = scatter_from_data(m);
      }
      try {
        validate(d);
      } catch (const Error& e) {
        fail(e.kind(), files[k] + ": " + e.what());
      }
      if (!out.empty() && d.p() != out.front().p())
        fail(ErrorKind::dimension_mismatch, files[k] + ": has " + std::to_string(d.p()) + " columns, expected " +
                                                std::to_string(out.front().p()));
      out.push_back(std::move(d));
    }
    return out;
  }

  json describe() const {
    return {{"inputs", files}, {"scatter", scatter}, {"n", n}, {"demean", demean}};
  }
};

SubspaceBasis load_subspace(const std::string& path, Index p) {
  const Matrix v = io::read_csv_matrix(path).values;
  if (v.rows() != p)
    fail(ErrorKind::dimension_mismatch, path + ": subspace has " + std::to_string(v.rows()) + " rows, data have " +
                                            std::to_string(p) + " columns");
  const double defect = orthonormality_error(v);
  if (!(defect <= 1e-6))
    fail(ErrorKind::invalid_input, path + ": columns are not orthonormal (max |V^T V - I| = " +
                                       io::format_double(defect) + ")");
  return SubspaceBasis::orthonormalized(v);
}

class Manifest {
 public:
  Manifest(std::string command, std::uint64_t seed) : started_(utc_now()) {
    doc_["command"] = std::move(command);
    doc_["seed"] = seed;
    doc_["version"] = COVSHARE_VERSION;
  }
  void options(json o) { doc_["options"] = std::move(o); }
  void inputs(const std::vector<std::string>& files) {
    json list = json::array();
    for (const auto& f : files) list.push_back({{"path", f}, {"sha256", sha256_file(f)}});
    doc_["inputs"] = std::move(list);
  }
  void output(const fs::path& p) { outputs_.push_back(p.filename().string()); }
  void write(const fs::path& dir) {
    doc_["outputs"] = outputs_;
    doc_["started_at"] = started_;
    doc_["finished_at"] = utc_now();
    io::write_text(dir / "manifest.json", doc_.dump(2) + "\n");
  }

 private:
  json doc_;
  std::vector<std::string> outputs_;
  std::string started_;
};

// ---------------------------------------------------------------- commands

struct FitArgs {
  GroupInputs in;
  int s = 0;
  int max_iters = 200;
  double tol = 1e-8;
  int inner_iters = 500;
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_fit(const FitArgs& a, std::ostream& log) {
  const auto data = a.in.load();
  const Index p = data.front().p();
  if (a.s >= p) fail(ErrorKind::invalid_input, "--s must be below the dimension p = " + std::to_string(p));
  EmOptions em;
  em.max_iters = a.max_iters;
  em.tol = a.tol;
  em.inner.max_iters = a.inner_iters;
  const EmFitResult res = fit(data, a.s, em);

  const fs::path dir(a.out);
  Manifest man("fit", a.seed);
  man.options({{"s", a.s}, {"max_iters", a.max_iters}, {"tol", a.tol}, {"inner_iters", a.inner_iters},
               {"groups", a.in.describe()}});
  man.inputs(a.in.files);

  std::vector<std::string> header;
  for (int j = 0; j < a.s; ++j) header.push_back("v" + std::to_string(j + 1));
  io::write_csv_matrix(dir / "V.csv", res.v_hat.matrix(), header);
  man.output(dir / "V.csv");

  {
    std::ostringstream os;
    os << "iteration,log_marginal_likelihood\n";
    for (std::size_t i = 0; i < res.objective_trace.size(); ++i)
      os << i << ',' << io::format_double(res.objective_trace[i]) << '\n';
    io::write_text(dir / "trace.csv", os.str());
    man.output(dir / "trace.csv");
  }

  json groups = json::array();
  for (std::size_t k = 0; k < data.size(); ++k) {
    json g{{"file", a.in.files[k]}, {"n", data[k].n}};
    try {
      const double s2 = sigma2_plugin(res.v_hat, data[k]);
      g["sigma2"] = s2;
      g["gamma"] = goodness_of_fit(data[k], res.v_hat, s2);
    } catch (const Error& e) {
      g["error"] = e.what();
    }
    groups.push_back(std::move(g));
  }
  json diag{{"s", a.s},
            {"p", p},
            {"iterations", res.iterations},
            {"converged", res.converged},
            {"log_marginal_likelihood", res.objective_trace.empty() ? 0.0 : res.objective_trace.back()},
            {"groups", std::move(groups)}};
  io::write_text(dir / "diagnostics.json", diag.dump(2) + "\n");
  man.output(dir / "diagnostics.json");
  man.write(dir);
  log << "fit: s = " << a.s << ", " << res.iterations << " EM iterations"
      << (res.converged ? "" : " (not converged)") << ", wrote " << dir.string() << "\n";
}

struct GibbsArgs {
  GroupInputs in;
  std::string subspace;
  int r = 2;
  int iters = 5000;
  int burnin = 1000;
  int thin = 2;
  double target = 0.95;
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_gibbs(const GibbsArgs& a, std::ostream& log) {
  const auto data = a.in.load();
  const SubspaceBasis v = load_subspace(a.subspace, data.front().p());
  if (a.r > v.s())
    fail(ErrorKind::invalid_input, "--r = " + std::to_string(a.r) + " exceeds the subspace dimension " +
                                       std::to_string(v.s()));
  ChainConfig cc;
  cc.n_iter = a.iters;
  cc.burn_in = a.burnin;
  cc.thin = a.thin;
  cc.seed = a.seed;
  try {
    cc.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const std::vector<int> ranks(data.size(), a.r);
  const auto chains = run_chains(data, v, ranks, cc, {}, worker_count());

  const fs::path dir(a.out);
  Manifest man("gibbs", a.seed);
  man.options({{"subspace", a.subspace}, {"r", a.r}, {"iters", a.iters}, {"burnin", a.burnin},
               {"thin", a.thin}, {"target", a.target}, {"groups", a.in.describe()}});
  std::vector<std::string> all_inputs = a.in.files;
  all_inputs.push_back(a.subspace);
  man.inputs(all_inputs);

  for (std::size_t k = 0; k < chains.size(); ++k) {
    const std::string tag = "group" + std::to_string(k);
    io::write_chain_jsonl(dir / (tag + "_chain.jsonl"), chains[k]);
    man.output(dir / (tag + "_chain.jsonl"));
    io::write_csv_matrix(dir / (tag + "_stein.csv"), stein_estimator(chains[k], v));
    man.output(dir / (tag + "_stein.csv"));
    if (a.r != 2) continue;
    const auto summary = summarize_chain(chains[k]);
    io::write_angle_ratio_csv(dir / (tag + "_angle_ratio.csv"), summary);
    man.output(dir / (tag + "_angle_ratio.csv"));
    if (summary.size() < 10) {
      log << "notice: " << tag << " has " << summary.size() << " draws; region needs at least 10\n";
      continue;
    }
    std::vector<Point2> pts;
    for (const auto& s : summary) pts.push_back({s.angle, s.log_ratio});
    io::write_region_csv(dir / (tag + "_region.csv"), hull_peel_region(pts, a.target));
    man.output(dir / (tag + "_region.csv"));
  }
  if (a.r != 2) log << "notice: angle / log-ratio summaries and regions need r = 2; skipped for r = " << a.r << "\n";
  man.write(dir);
  log << "gibbs: " << chains.size() << " chains of " << cc.draw_count() << " draws, wrote " << dir.string() << "\n";
}

struct RanksArgs {
  GroupInputs in;
  std::string out;
};

void cmd_ranks(const RanksArgs& a, std::ostream& log) {
  const auto data = a.in.load();
  auto describe = [](const RankEstimate& e) {
    return json{{"rank", e.rank}, {"threshold", e.threshold}, {"median_singular_value", e.median_sv},
                {"beta", e.beta}};
  };
  json groups = json::array();
  for (std::size_t k = 0; k < data.size(); ++k) {
    json g = describe(estimate_group_rank(data[k]));
    g["file"] = a.in.files[k];
    groups.push_back(std::move(g));
  }
  const RankEstimate shared = estimate_shared_dimension(data);
  const json doc{{"groups", std::move(groups)}, {"shared", describe(shared)}};
  const fs::path dir(a.out);
  io::write_text(dir / "ranks.json", doc.dump(2) + "\n");
  Manifest man("ranks", 0);
  man.options({{"groups", a.in.describe()}});
  man.inputs(a.in.files);
  man.output(dir / "ranks.json");
  man.write(dir);
  log << "ranks: shared dimension " << shared.rank << ", wrote " << dir.string() << "\n";
}

struct SimulateArgs {
  std::string experiment;
  int reps = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int iters = 0;
  int burnin = 0;
  int thin = 0;
  std::string out;
};

void cmd_simulate(const SimulateArgs& a, std::ostream& log) {
  sim::PipelineOptions pipe;
  if (a.iters > 0) pipe.chain.n_iter = a.iters;
  if (a.burnin > 0) pipe.chain.burn_in = a.burnin;
  if (a.thin > 0) pipe.chain.thin = a.thin;
  pipe.threads = worker_count();
  sim::ExperimentReport report;
  std::uint64_t seed = 0;
  if (a.experiment == "table1") {
    sim::Table1Options o;
    if (a.reps > 0) o.replications = a.reps;
    if (a.seed_set) o.seed = a.seed;
    o.pipeline = pipe;
    seed = o.seed;
    report = sim::run_table1(o);
  } else if (a.experiment == "coverage") {
    sim::CoverageOptions o;
    if (a.reps > 0) o.replications = a.reps;
    if (a.seed_set) o.seed = a.seed;
    o.pipeline = pipe;
    seed = o.seed;
    report = sim::run_coverage(o);
  } else if (a.experiment == "accuracy") {
    sim::AccuracyOptions o;
    if (a.reps > 0) o.replications = a.reps;
    if (a.seed_set) o.seed = a.seed;
    o.threads = pipe.threads;
    seed = o.seed;
    report = sim::run_accuracy_vs_k(o);
  } else {
    sim::BiasOptions o;
    if (a.reps > 0) o.replications = a.reps;
    if (a.seed_set) o.seed = a.seed;
    seed = o.seed;
    report = sim::run_eigenvalue_bias(o);
  }
  const fs::path dir(a.out);
  Manifest man("simulate", seed);
  man.options({{"experiment", a.experiment}, {"reps", report.replications}, {"iters", pipe.chain.n_iter},
               {"burnin", pipe.chain.burn_in}, {"thin", pipe.chain.thin}});
  man.inputs({});
  io::write_report_csv(dir / "report.csv", report);
  man.output(dir / "report.csv");
  io::write_report_json(dir / "summary.json", report);
  man.output(dir / "summary.json");
  man.write(dir);
  for (const auto& c : report.cells) {
    for (const auto& k : c.key) log << k << "  ";
    log << report.value_columns.front() << " = " << c.mean << " (" << c.q025 << ", " << c.q975 << ")\n";
  }
  log << "simulate: " << a.experiment << " done in " << report.wall_seconds << " s, wrote " << dir.string() << "\n";
}

struct GofArgs {
  GroupInputs in;
  std::string subspace;
  bool as_printed = false;
  std::string out;
};

void cmd_gof(const GofArgs& a, std::ostream& log) {
  const auto data = a.in.load();
  const SubspaceBasis v = load_subspace(a.subspace, data.front().p());
  std::ostringstream os;
  os << "group,file,sigma2,gamma,error\n";
  int failures = 0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    os << k << ',' << a.in.files[k] << ',';
    try {
      const double s2 = sigma2_plugin(v, data[k]);
      os << io::format_double(s2) << ','
         << io::format_double(goodness_of_fit(data[k], v, s2, a.as_printed ? GofNorm::as_printed : GofNorm::squared))
         << ",\n";
    } catch (const Error& e) {
      ++failures;
      std::string msg = e.what();
      std::replace(msg.begin(), msg.end(), ',', ';');
      os << ",," << msg << '\n';
      log << "warning: group " << k << ": " << e.what() << "\n";
    }
  }
  const fs::path dir(a.out);
  io::write_text(dir / "gof.csv", os.str());
  Manifest man("gof", 0);
  man.options({{"subspace", a.subspace}, {"as_printed", a.as_printed}, {"groups", a.in.describe()}});
  std::vector<std::string> all_inputs = a.in.files;
  all_inputs.push_back(a.subspace);
  man.inputs(all_inputs);
  man.output(dir / "gof.csv");
  man.write(dir);
  log << "gof: " << data.size() - failures << " of " << data.size() << " groups evaluated, wrote " << dir.string()
      << "\n";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input:
    case ErrorKind::dimension_mismatch:
      return data_error;
    default:
      return numerical_error;
  }
}

}  // namespace

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::invalid_input, "cannot open: " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Shared-subspace covariance estimation for multiple groups", "covshare"};
  app.set_version_flag("--version", COVSHARE_VERSION);
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Estimate the shared subspace by EM");
  fit_args.in.add_to(*fit_cmd);
  fit_cmd->add_option("--s", fit_args.s, "Subspace dimension")->required()->check(CLI::PositiveNumber);
  fit_cmd->add_option("--max-iters", fit_args.max_iters, "EM iteration cap")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--tol", fit_args.tol, "Relative tolerance on the marginal likelihood")
      ->check(CLI::PositiveNumber);
  fit_cmd->add_option("--inner-iters", fit_args.inner_iters, "Optimizer iterations per M-step")
      ->check(CLI::PositiveNumber);
  fit_cmd->add_option("--seed", fit_args.seed, "Recorded in the manifest (the fit is deterministic)");
  fit_cmd->add_option("--out", fit_args.out, "Output directory")->required();

  GibbsArgs gibbs_args;
  auto* gibbs_cmd = app.add_subcommand("gibbs", "Sample per-group posteriors on a fixed subspace");
  gibbs_args.in.add_to(*gibbs_cmd);
  gibbs_cmd->add_option("--subspace", gibbs_args.subspace, "Subspace basis CSV (p x s)")
      ->required()
      ->check(CLI::ExistingFile);
  gibbs_cmd->add_option("--r", gibbs_args.r, "Number of spikes per group")->check(CLI::NonNegativeNumber);
  gibbs_cmd->add_option("--iters", gibbs_args.iters, "Total sweeps")->check(CLI::PositiveNumber);
  gibbs_cmd->add_option("--burnin", gibbs_args.burnin, "Discarded sweeps")->check(CLI::NonNegativeNumber);
  gibbs_cmd->add_option("--thin", gibbs_args.thin, "Keep every thin-th sweep")->check(CLI::PositiveNumber);
  gibbs_cmd->add_option("--target", gibbs_args.target, "Credible level of the regions")->check(CLI::Range(0.0, 1.0));
  gibbs_cmd->add_option("--seed", gibbs_args.seed, "Random seed");
  gibbs_cmd->add_option("--out", gibbs_args.out, "Output directory")->required();

  RanksArgs ranks_args;
  auto* ranks_cmd = app.add_subcommand("ranks", "Hard-threshold rank selection per group and pooled");
  ranks_args.in.add_to(*ranks_cmd);
  ranks_cmd->add_option("--out", ranks_args.out, "Output directory")->required();

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a simulation study");
  sim_cmd->add_option("--experiment", sim_args.experiment, "table1 | coverage | accuracy | bias")
      ->required()
      ->check(CLI::IsMember({"table1", "coverage", "accuracy", "bias"}));
  sim_cmd->add_option("--reps", sim_args.reps, "Replications (default per experiment)")->check(CLI::PositiveNumber);
  auto* seed_opt = sim_cmd->add_option("--seed", sim_args.seed, "Base seed (default per experiment)");
  sim_cmd->add_option("--iters", sim_args.iters, "Gibbs sweeps per chain")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--burnin", sim_args.burnin, "Gibbs burn-in")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--thin", sim_args.thin, "Gibbs thinning")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--out", sim_args.out, "Output directory")->required();

  GofArgs gof_args;
  auto* gof_cmd = app.add_subcommand("gof", "Goodness of fit of each group to a subspace");
  gof_args.in.add_to(*gof_cmd);
  gof_cmd->add_option("--subspace", gof_args.subspace, "Subspace basis CSV (p x s)")
      ->required()
      ->check(CLI::ExistingFile);
  gof_cmd->add_flag("--as-printed", gof_args.as_printed, "Use unsquared norms in the ratio");
  gof_cmd->add_option("--out", gof_args.out, "Output directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : usage;
  }

  try {
    if (*fit_cmd) cmd_fit(fit_args, out);
    if (*gibbs_cmd) cmd_gibbs(gibbs_args, out);
    if (*ranks_cmd) cmd_ranks(ranks_args, out);
    if (*sim_cmd) {
      sim_args.seed_set = seed_opt->count() > 0;
      cmd_simulate(sim_args, out);
    }
    if (*gof_cmd) cmd_gof(gof_args, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return usage;
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return data_error;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return data_error;
  }
  return ok;
}

}  // namespace covshare::cli
