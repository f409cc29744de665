#include "covshare/gibbs.hpp"

#include "covshare/error.hpp"
#include "covshare/parallel.hpp"
#include "covshare/samplers.hpp"

#include <algorithm>
#include <numeric>

namespace covshare {

void ChainConfig::validate() const {
  if (n_iter < 1 || burn_in < 0 || burn_in >= n_iter)
    fail(ErrorKind::invalid_input, "chain needs 0 <= burn_in < n_iter");
  if (thin < 1) fail(ErrorKind::invalid_input, "thin must be >= 1");
}

ProjectedGroup ProjectedGroup::from(const SubspaceBasis& v, const GroupDataset& data) {
  ProjectedGroup g{project_scatter(v, data.scatter), data.scatter.trace(), v.p(), data.n, std::nullopt};
  if (2 * static_cast<Index>(data.n) > v.s()) return g;
  if (data.raw) {
    g.factor = WideFactor::from(*data.raw * v.matrix());
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> es(g.vsv);
    const Vector d = es.eigenvalues();
    const double top = std::max(d.maxCoeff(), 0.0);
    Index m = 0;
    while (m < d.size() && d(d.size() - 1 - m) > 1e-12 * top) ++m;
    g.factor = WideFactor::from(d.tail(m).cwiseSqrt().asDiagonal() * es.eigenvectors().rightCols(m).transpose());
  }
  return g;
}

namespace {

struct State {
  double sigma2;
  Matrix o;
  Vector omega;
};

// x^T V^T S V x
double quad(const ProjectedGroup& g, const Eigen::Ref<const Vector>& x) {
  return g.factor ? (g.factor->f * x).squaredNorm() : x.dot(g.vsv * x);
}

double c_value(const ProjectedGroup& g, const Eigen::Ref<const Vector>& col, double sigma2) {
  return quad(g, col) / (static_cast<double>(g.n) * sigma2);
}

void sort_descending(State& st) {
  const Index r = st.omega.size();
  std::vector<Index> order(static_cast<std::size_t>(r));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return st.omega(a) > st.omega(b); });
  Matrix o(st.o.rows(), r);
  Vector w(r);
  for (Index i = 0; i < r; ++i) {
    o.col(i) = st.o.col(order[static_cast<std::size_t>(i)]);
    w(i) = st.omega(order[static_cast<std::size_t>(i)]);
  }
  st.o = std::move(o);
  st.omega = std::move(w);
}

void sweep(Rng& rng, State& st, const ProjectedGroup& g) {
  if (g.factor) {
    double explained = 0.0;
    for (Index i = 0; i < st.omega.size(); ++i) explained += st.omega(i) * quad(g, st.o.col(i));
    const double rate = 0.5 * (g.trace_s - explained);
    if (!(rate > 0)) fail(ErrorKind::degenerate_posterior, "nonpositive residual scatter in sigma2 update");
    st.sigma2 = sample_inverse_gamma(rng, 0.5 * static_cast<double>(g.n) * static_cast<double>(g.p), rate);
  } else {
    st.sigma2 = sample_sigma2(rng, g.vsv, g.trace_s, g.p, g.n, st.o, st.omega);
  }
  if (g.factor) {
    st.o = sample_bingham_O_factor(rng, *g.factor, 1.0 / (2.0 * st.sigma2), st.omega, st.o);
  } else {
    st.o = sample_bingham_O(rng, g.vsv / (2.0 * st.sigma2), st.omega, st.o);
  }
  for (Index i = 0; i < st.omega.size(); ++i)
    st.omega(i) = sample_omega(rng, c_value(g, st.o.col(i), st.sigma2), static_cast<double>(g.n));
  sort_descending(st);
  canonicalize_signs(st.o);
}

State to_state(const GroupSpikeParams& p) { return State{p.sigma2(), p.eigvecs(), p.omega()}; }

GroupSpikeParams to_params(const State& st) { return GroupSpikeParams(st.sigma2, st.o, st.omega, 1e-9); }

}  // namespace

GroupSpikeParams initial_state(const ProjectedGroup& g, Index r) {
  const Index s = g.vsv.rows();
  if (r < 0 || r > s) fail(ErrorKind::invalid_input, "need 0 <= r <= s");
  Eigen::SelfAdjointEigenSolver<Matrix> es(g.vsv);
  Matrix o = es.eigenvectors().rightCols(r).rowwise().reverse();
  double sigma2 = 0.0;
  if (g.p > s)
    sigma2 = (g.trace_s - g.vsv.trace()) / (static_cast<double>(g.n) * static_cast<double>(g.p - s));
  if (!(sigma2 > 0)) sigma2 = g.trace_s / (static_cast<double>(g.n) * static_cast<double>(g.p));
  if (!(sigma2 > 0)) fail(ErrorKind::degenerate_posterior, "scatter has zero trace");
  Vector omega(r);
  for (Index i = 0; i < r; ++i) omega(i) = std::min(omega_mode(c_value(g, o.col(i), sigma2)), 0.999999);
  canonicalize_signs(o);
  State st{sigma2, o, omega};
  sort_descending(st);
  return to_params(st);
}

GroupSpikeParams gibbs_step(Rng& rng, const GroupSpikeParams& state, const ProjectedGroup& g) {
  if (state.dim() != g.vsv.rows()) fail(ErrorKind::dimension_mismatch, "state and subspace disagree on s");
  State st = to_state(state);
  sweep(rng, st, g);
  return to_params(st);
}

GroupSpikeParams gibbs_step(Rng& rng, const GroupSpikeParams& state, const SubspaceBasis& v,
                            const GroupDataset& data) {
  return gibbs_step(rng, state, ProjectedGroup::from(v, data));
}

GibbsChain run_chain(const GroupDataset& data, const SubspaceBasis& v, Index r, const ChainConfig& config,
                     int group_id, std::optional<GroupSpikeParams> init) {
  config.validate();
  if (r < 0 || r > v.s()) fail(ErrorKind::invalid_input, "need 0 <= r <= s");
  const ProjectedGroup g = ProjectedGroup::from(v, data);
  Rng rng(config.seed);
  State st = to_state(init ? *init : initial_state(g, r));
  if (st.omega.size() != r || st.o.rows() != v.s())
    fail(ErrorKind::dimension_mismatch, "initial state has the wrong shape");

  GibbsChain chain;
  chain.group_id = group_id;
  chain.config = config;
  chain.draws.reserve(static_cast<std::size_t>(config.draw_count()));
  for (int it = 0; it < config.n_iter; ++it) {
    sweep(rng, st, g);
    if (it >= config.burn_in && (it - config.burn_in + 1) % config.thin == 0) chain.draws.push_back(to_params(st));
  }
  return chain;
}

std::vector<GibbsChain> run_chains(std::span<const GroupDataset> data, const SubspaceBasis& v,
                                   std::span<const int> ranks, const ChainConfig& config,
                                   std::span<const int> ids, int threads) {
  if (ranks.size() != data.size()) fail(ErrorKind::dimension_mismatch, "need one rank per group");
  if (!ids.empty() && ids.size() != data.size()) fail(ErrorKind::dimension_mismatch, "need one id per group");
  std::vector<std::optional<GibbsChain>> out(data.size());
  parallel_for(data.size(), threads, [&](std::size_t k) {
    const int id = ids.empty() ? static_cast<int>(k) : ids[k];
    ChainConfig cfg = config;
    cfg.seed = config.seed ^ static_cast<std::uint64_t>(id);
    out[k] = run_chain(data[k], v, ranks[k], cfg, id);
  });
  std::vector<GibbsChain> chains;
  chains.reserve(out.size());
  for (auto& c : out) chains.push_back(std::move(*c));
  return chains;
}

AveragePrecision average_precision(std::span<const GroupSpikeParams> draws) {
  if (draws.empty()) fail(ErrorKind::invalid_input, "empty chain");
  const Index s = draws.front().dim();
  AveragePrecision avg{0.0, Matrix::Zero(s, s)};
  for (const auto& d : draws) {
    if (d.dim() != s) fail(ErrorKind::dimension_mismatch, "draws disagree on s");
    const double inv = 1.0 / d.sigma2();
    avg.c += inv;
    avg.a.noalias() += inv * (d.eigvecs() * d.omega().asDiagonal() * d.eigvecs().transpose());
  }
  avg.c /= static_cast<double>(draws.size());
  avg.a /= static_cast<double>(draws.size());
  avg.a = 0.5 * (avg.a + avg.a.transpose());
  return avg;
}

Matrix stein_estimator(std::span<const GroupSpikeParams> draws, const SubspaceBasis& v) {
  const AveragePrecision avg = average_precision(draws);
  if (avg.a.rows() != v.s()) fail(ErrorKind::dimension_mismatch, "draws and subspace disagree on s");
  const Index s = v.s();
  const Matrix inner = avg.c * Matrix::Identity(s, s) - avg.a;
  Eigen::LLT<Matrix> llt(inner);
  if (llt.info() != Eigen::Success || !(avg.c > 0))
    fail(ErrorKind::singular_model, "average precision is not positive definite");
  const Matrix inner_inv = llt.solve(Matrix::Identity(s, s));
  const Matrix& vm = v.matrix();
  Matrix out = -(vm * vm.transpose()) / avg.c;
  out.diagonal().array() += 1.0 / avg.c;
  out.noalias() += vm * inner_inv * vm.transpose();
  return 0.5 * (out + out.transpose());
}

Matrix stein_estimator(const GibbsChain& chain, const SubspaceBasis& v) {
  return stein_estimator(std::span<const GroupSpikeParams>(chain.draws), v);
}

PartitionedChains run_partitioned_chains(std::span<const GroupDataset> data, const SubspaceBasis& v, Index r,
                                         const ChainConfig& config) {
  config.validate();
  const Index s = v.s();
  if (r < 1 || r > s) fail(ErrorKind::invalid_input, "need 1 <= r <= s for the block model");
  if (data.empty()) fail(ErrorKind::invalid_input, "need at least one group");
  const Index shared = s - r;
  const std::size_t kg = data.size();

  std::vector<ProjectedGroup> groups;
  for (const auto& d : data) groups.push_back(ProjectedGroup::from(v, d));

  Rng rng(config.seed);
  std::vector<State> states;
  Vector shared_omega = Vector::Zero(shared);
  for (const auto& g : groups) {
    ProjectedGroup block{g.vsv.topLeftCorner(r, r), g.trace_s, g.p, g.n, std::nullopt};
    states.push_back(to_state(initial_state(block, r)));
  }
  {
    // start the shared spikes at the pooled conditional mode
    for (Index j = 0; j < shared; ++j) {
      double cn = 0.0, nn = 0.0;
      for (std::size_t k = 0; k < kg; ++k) {
        cn += groups[k].vsv(r + j, r + j) / states[k].sigma2;
        nn += groups[k].n;
      }
      shared_omega(j) = std::min(omega_mode(cn / nn), 0.999999);
    }
  }

  PartitionedChains out;
  out.draws.resize(kg);
  for (int it = 0; it < config.n_iter; ++it) {
    for (std::size_t k = 0; k < kg; ++k) {
      const ProjectedGroup& g = groups[k];
      State& st = states[k];
      // sigma2 on the full subspace with O_full = blockdiag(O_k, I)
      Matrix o_full = Matrix::Zero(s, s);
      o_full.topLeftCorner(r, r) = st.o;
      if (shared > 0) o_full.bottomRightCorner(shared, shared).setIdentity();
      Vector w_full(s);
      w_full << st.omega, shared_omega;
      st.sigma2 = sample_sigma2(rng, g.vsv, g.trace_s, g.p, g.n, o_full, w_full);
      const Matrix a = g.vsv.topLeftCorner(r, r) / (2.0 * st.sigma2);
      st.o = sample_bingham_O(rng, a, st.omega, st.o);
      ProjectedGroup block{g.vsv.topLeftCorner(r, r), g.trace_s, g.p, g.n, std::nullopt};
      for (Index i = 0; i < r; ++i)
        st.omega(i) = sample_omega(rng, c_value(block, st.o.col(i), st.sigma2), static_cast<double>(g.n));
      sort_descending(st);
      canonicalize_signs(st.o);
    }
    for (Index j = 0; j < shared; ++j) {
      std::vector<double> c(kg);
      std::vector<int> n(kg);
      for (std::size_t k = 0; k < kg; ++k) {
        c[k] = groups[k].vsv(r + j, r + j) / (static_cast<double>(groups[k].n) * states[k].sigma2);
        n[k] = groups[k].n;
      }
      shared_omega(j) = sample_omega_pooled(rng, c, n);
    }
    if (it >= config.burn_in && (it - config.burn_in + 1) % config.thin == 0) {
      Vector d(shared);
      for (Index j = 0; j < shared; ++j)
        d(j) = lambda_from_omega(std::max(shared_omega(j), std::numeric_limits<double>::min()));
      for (std::size_t k = 0; k < kg; ++k) out.draws[k].emplace_back(to_params(states[k]), d);
    }
  }
  return out;
}

}  // namespace covshare
