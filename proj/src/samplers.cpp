#include "covshare/samplers.hpp"

#include "covshare/error.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace covshare {

double sample_inverse_gamma(Rng& rng, double shape, double rate) {
  if (!(shape > 0) || !(rate > 0) || !std::isfinite(rate))
    fail(ErrorKind::degenerate_posterior, "inverse-gamma needs positive shape and rate");
  std::gamma_distribution<double> gamma(shape, 1.0 / rate);
  double g = 0.0;
  do {
    g = gamma(rng);
  } while (!(g > 0));
  return 1.0 / g;
}

double sample_sigma2(Rng& rng, const Eigen::Ref<const Matrix>& vsv, double trace_s, Index p, int n,
                     const Eigen::Ref<const Matrix>& o, const Eigen::Ref<const Vector>& omega) {
  double quad = trace_s;
  for (Index i = 0; i < omega.size(); ++i) quad -= omega(i) * o.col(i).dot(vsv * o.col(i));
  const double rate = 0.5 * quad;
  if (!(rate > 0)) fail(ErrorKind::degenerate_posterior, "sigma2 conditional has nonpositive rate");
  return sample_inverse_gamma(rng, 0.5 * static_cast<double>(n) * static_cast<double>(p), rate);
}

double omega_log_density(double omega, double c, double n) {
  if (omega < 0 || omega >= 1) return -std::numeric_limits<double>::infinity();
  return 0.5 * n * std::log1p(-omega) + 0.5 * c * omega * n;
}

double omega_mode(double c) { return c > 1.0 ? (c - 1.0) / c : 0.0; }

namespace {

// t ~ Gamma(shape, rate) restricted to (0, 1].
double sample_truncated_gamma_unit(Rng& rng, double shape, double rate) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (rate <= 0) {
    // density t^{shape-1} on (0, 1]
    return std::pow(1.0 - unif(rng), 1.0 / shape);
  }
  const double mass = boost::math::gamma_p(shape, rate);
  if (mass > 1e-100) {
    double u = 0.0;
    do {
      u = unif(rng);
    } while (u <= 0.0);
    const double t = boost::math::gamma_p_inv(shape, u * mass) / rate;
    return std::clamp(t, std::numeric_limits<double>::min(), 1.0);
  }
  // rate << shape: the density increases on (0, 1]. Propose from t^{k} with
  // k = shape - 1 - rate and accept with probability exp(rate (log t - t + 1)).
  const double k = shape - 1.0 - rate;
  for (;;) {
    const double t = std::pow(1.0 - unif(rng), 1.0 / (k + 1.0));
    if (t <= 0) continue;
    if (unif(rng) < std::exp(rate * (std::log(t) - t + 1.0))) return t;
  }
}

}  // namespace

double sample_omega(Rng& rng, double c, double n) {
  if (!(n >= 1) || !std::isfinite(c)) fail(ErrorKind::invalid_input, "omega conditional needs n >= 1, finite c");
  const double t = sample_truncated_gamma_unit(rng, 0.5 * n + 1.0, std::max(0.0, 0.5 * c * n));
  // c < 0 cannot arise from a PSD scatter; treat it as c = 0 plus an
  // exponential tilt towards 0 by rejection.
  double omega = 1.0 - t;
  if (c < 0) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    while (unif(rng) >= std::exp(0.5 * c * n * omega))
      omega = 1.0 - sample_truncated_gamma_unit(rng, 0.5 * n + 1.0, 0.0);
  }
  return std::clamp(omega, 0.0, std::nextafter(1.0, 0.0));
}

double sample_omega_pooled(Rng& rng, std::span<const double> c, std::span<const int> n) {
  if (c.size() != n.size() || c.empty())
    fail(ErrorKind::invalid_input, "pooled omega needs matching nonempty c and n");
  // prod_k (1-w)^{n_k/2} exp(c_k w n_k/2) = (1-w)^{N/2} exp(C w N/2)
  // with N = sum n_k and C = sum c_k n_k / N.
  double total_n = 0.0;
  double weighted = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    if (n[k] < 1 || !std::isfinite(c[k])) fail(ErrorKind::invalid_input, "invalid pooled omega inputs");
    total_n += n[k];
    weighted += c[k] * n[k];
  }
  return sample_omega(rng, weighted / total_n, total_n);
}

SpectralBinghamDraw sample_spectral_bingham(Rng& rng, const Eigen::Ref<const Vector>& head, double tail,
                                            Index tail_dim) {
  const Index m = head.size();
  const Index q = m + tail_dim;
  if (q < 1 || tail_dim < 0) fail(ErrorKind::invalid_input, "spectral Bingham needs a positive dimension");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // exp(x^T C x) = const * exp(-x^T A x) with A = max(C) I - C >= 0.
  double top = m > 0 ? head.maxCoeff() : tail;
  if (tail_dim > 0) top = std::max(top, tail);
  const Vector a = (top - head.array()).cwiseMax(0.0).matrix();
  const double a_tail = std::max(0.0, top - tail);
  const double qd = static_cast<double>(q);
  const double td = static_cast<double>(tail_dim);

  // Envelope parameter b solves sum_i 1/(b + 2 a_i) = 1 on (0, q].
  const auto phi = [&](double b) {
    return (1.0 / (b + 2.0 * a.array())).sum() + td / (b + 2.0 * a_tail) - 1.0;
  };
  double lo = 1e-12;
  double hi = qd;
  if (phi(hi) < 0) {
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
      const double mid = 0.5 * (lo + hi);
      (phi(mid) > 0 ? lo : hi) = mid;
    }
  }
  const double b = hi;
  const Vector omega_head = (1.0 + 2.0 * a.array() / b).matrix();
  const double omega_tail = 1.0 + 2.0 * a_tail / b;
  const Vector sd = omega_head.cwiseSqrt().cwiseInverse();
  const double log_bound = -0.5 * (qd - b) + 0.5 * qd * std::log(qd / b);
  // |tail|^2 of an isotropic N(0, I / omega_tail) block is a scaled chi-square.
  std::gamma_distribution<double> tail_chi2(0.5 * std::max(td, 1.0), 2.0 / omega_tail);

  Vector y(m);
  for (;;) {
    for (Index i = 0; i < m; ++i) y(i) = sd(i) * normal(rng);
    const double tail_sq = tail_dim > 0 ? tail_chi2(rng) : 0.0;
    const double norm_sq = y.squaredNorm() + tail_sq;
    if (!(norm_sq > 0)) continue;
    const Vector y2 = y.cwiseProduct(y);
    const double quad_a = (y2.dot(a) + a_tail * tail_sq) / norm_sq;
    const double quad_omega = (y2.dot(omega_head) + omega_tail * tail_sq) / norm_sq;
    const double log_ratio = -quad_a + 0.5 * qd * std::log(quad_omega) - log_bound;
    if (std::log(unif(rng)) < log_ratio) return {y / std::sqrt(norm_sq), std::sqrt(tail_sq / norm_sq)};
  }
}

Vector sample_vector_bingham(Rng& rng, const Eigen::Ref<const Matrix>& c) {
  const Index q = c.rows();
  if (q != c.cols() || q < 1) fail(ErrorKind::invalid_input, "vector Bingham needs a square matrix");
  if (q == 1) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    return Vector::Constant(1, unif(rng) < 0.5 ? -1.0 : 1.0);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (c + c.transpose()));
  return es.eigenvectors() * sample_spectral_bingham(rng, es.eigenvalues(), 0.0, 0).head;
}

Matrix orthogonal_complement(const Eigen::Ref<const Matrix>& a, Index s) {
  if (a.cols() == 0) return Matrix::Identity(s, s);
  Eigen::HouseholderQR<Matrix> qr(a);
  const Matrix q = qr.householderQ() * Matrix::Identity(s, s);
  return q.rightCols(s - a.cols());
}

void canonicalize_signs(Matrix& o) {
  for (Index j = 0; j < o.cols(); ++j) {
    for (Index i = 0; i < o.rows(); ++i) {
      if (std::abs(o(i, j)) > 1e-12) {
        if (o(i, j) < 0) o.col(j) = -o.col(j);
        break;
      }
    }
  }
}

double bingham_log_density(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Vector>& omega,
                           const Eigen::Ref<const Matrix>& o) {
  double out = 0.0;
  for (Index i = 0; i < omega.size(); ++i) out += omega(i) * o.col(i).dot(a * o.col(i));
  return out;
}

Matrix sample_bingham_O(Rng& rng, const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Vector>& omega,
                        const Eigen::Ref<const Matrix>& o_current) {
  const Index s = a.rows();
  const Index r = omega.size();
  if (a.cols() != s || o_current.rows() != s || o_current.cols() != r)
    fail(ErrorKind::dimension_mismatch, "Bingham sampler shapes disagree");
  const Matrix sym = 0.5 * (a + a.transpose());
  Matrix o = o_current;
  if (r == 0) return o;

  if (r < s) {
    for (Index i = 0; i < r; ++i) {
      Matrix rest(s, r - 1);
      for (Index j = 0, c = 0; j < r; ++j)
        if (j != i) rest.col(c++) = o.col(j);
      const Matrix basis = orthogonal_complement(rest, s);  // s x (s - r + 1)
      const Matrix cz = omega(i) * (basis.transpose() * sym * basis);
      o.col(i) = basis * sample_vector_bingham(rng, cz);
    }
  } else if (r == 1) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    if (unif(rng) < 0.5) o = -o;
  } else {
    // Square frame: rotate each pair of columns within their own span. With
    // (o_i, o_j) = N (x, +-x_perp), the density is exp((w_i - w_j) x^T N^T A N x).
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Index i = 0; i < r; ++i) {
      for (Index j = i + 1; j < r; ++j) {
        Matrix basis(s, 2);
        basis << o.col(i), o.col(j);
        const Matrix b = basis.transpose() * sym * basis;
        const Vector x = sample_vector_bingham(rng, (omega(i) - omega(j)) * b);
        const Vector xperp = Eigen::Vector2d(-x(1), x(0));
        const double sign = unif(rng) < 0.5 ? -1.0 : 1.0;
        o.col(i) = basis * x;
        o.col(j) = sign * (basis * xperp);
      }
    }
  }
  if (orthonormality_error(o) > 1e-12) {
    // re-orthonormalize against accumulated rounding without changing the span order
    Eigen::HouseholderQR<Matrix> qr(o);
    Matrix q = qr.householderQ() * Matrix::Identity(s, r);
    const Matrix rr = qr.matrixQR().topRows(r);
    for (Index j = 0; j < r; ++j)
      if (rr(j, j) < 0) q.col(j) = -q.col(j);
    o = q;
  }
  return o;
}

std::optional<SymmetricEigen> diag_rank_one_downdate(const Eigen::Ref<const Vector>& d,
                                                     const Eigen::Ref<const Vector>& w) {
  const Index n = d.size();
  if (w.size() != n) fail(ErrorKind::dimension_mismatch, "rank-one downdate sizes disagree");
  SymmetricEigen out{d, Matrix::Identity(n, n)};
  const double wnorm2 = w.squaredNorm();
  const double scale = std::max(d.cwiseAbs().maxCoeff(), wnorm2);
  if (n == 0 || wnorm2 <= 1e-300) return out;

  // Components with negligible weight keep their pole as an eigenvalue.
  std::vector<Index> act;
  const double wtol = 1e-15 * std::sqrt(scale);
  for (Index i = 0; i < n; ++i)
    if (std::abs(w(i)) > wtol) act.push_back(i);
  const Index m = static_cast<Index>(act.size());
  if (m == 0) return out;
  Vector da(m), wa(m);
  for (Index i = 0; i < m; ++i) {
    da(i) = d(act[i]);
    wa(i) = w(act[i]);
  }
  for (Index i = 1; i < m; ++i)
    if (da(i) - da(i - 1) <= 1e-13 * scale) return std::nullopt;
  const Vector w2 = wa.cwiseProduct(wa);

  // Root k lies in (da(k-1), da(k)) (below da(0) for k = 0) and is stored as
  // origin + tau, origin being the nearer pole, so differences stay accurate.
  Vector origin(m), tau(m);
  Vector diff(m);
  const auto secular = [&](double t, double& deriv) {
    double g = 1.0;
    deriv = 0.0;
    for (Index j = 0; j < m; ++j) {
      const double inv = 1.0 / (diff(j) - t);
      const double term = w2(j) * inv;
      g -= term;
      deriv -= term * inv;
    }
    return g;
  };
  for (Index k = 0; k < m; ++k) {
    const double hi = da(k);
    const double lo = k == 0 ? da(0) - wnorm2 : da(k - 1);
    double org = hi;
    if (k > 0) {
      double dummy;
      for (Index j = 0; j < m; ++j) diff(j) = da(j) - lo;
      if (secular(0.5 * (hi - lo), dummy) <= 0) org = lo;  // g decreasing: root below the midpoint
    }
    for (Index j = 0; j < m; ++j) diff(j) = da(j) - org;
    double a = lo - org;
    double b = hi - org;
    if (org == lo) b = 0.5 * (hi - lo);
    else if (k > 0) a = -0.5 * (hi - lo);
    double t = 0.5 * (a + b);
    for (int it = 0; it < 200; ++it) {
      double deriv;
      const double g = secular(t, deriv);
      if (g == 0.0) break;
      (g > 0 ? a : b) = t;
      // Newton on t g(t), which has no pole at the origin pole t = 0.
      double next = t - t * g / (g + t * deriv);
      if (!(next > a && next < b)) next = 0.5 * (a + b);
      if (std::abs(b - a) <= 4 * std::numeric_limits<double>::epsilon() * std::max(std::abs(a), std::abs(b))) {
        t = next;
        break;
      }
      if (std::abs(next - t) <= 2 * std::numeric_limits<double>::epsilon() * std::abs(t)) {
        t = next;
        break;
      }
      t = next;
    }
    origin(k) = org;
    tau(k) = t;
  }

  // Gu-Eisenstat: recompute the weights from the computed roots so that the
  // eigenvectors come out numerically orthogonal.
  // Pairing each root with a pole keeps the running product O(1).
  Vector what(m);
  for (Index i = 0; i < m; ++i) {
    double prod = (da(i) - origin(i)) - tau(i);
    for (Index j = 0; j < m; ++j)
      if (j != i) prod *= ((da(i) - origin(j)) - tau(j)) / (da(i) - da(j));
    what(i) = std::copysign(std::sqrt(std::abs(prod)), wa(i));
  }
  for (Index k = 0; k < m; ++k) {
    Vector v(m);
    for (Index i = 0; i < m; ++i) v(i) = what(i) / ((da(i) - origin(k)) - tau(k));
    v.normalize();
    out.values(act[k]) = origin(k) + tau(k);
    out.vectors.col(act[k]).setZero();
    for (Index i = 0; i < m; ++i) out.vectors(act[i], act[k]) = v(i);
  }
  // The deflated poles keep unit vectors; restore ascending order overall.
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return out.values(x) < out.values(y); });
  SymmetricEigen sorted{Vector(n), Matrix(n, n)};
  for (Index k = 0; k < n; ++k) {
    sorted.values(k) = out.values(order[static_cast<std::size_t>(k)]);
    sorted.vectors.col(k) = out.vectors.col(order[static_cast<std::size_t>(k)]);
  }
  return sorted;
}

WideFactor WideFactor::from(Matrix f) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(f * f.transpose());
  return WideFactor{std::move(f), es.eigenvectors(), es.eigenvalues()};
}

Matrix sample_bingham_O_factor(Rng& rng, const WideFactor& factor, double scale,
                               const Eigen::Ref<const Vector>& omega, const Eigen::Ref<const Matrix>& o_current) {
  const Matrix& f = factor.f;
  const Index s = f.cols();
  const Index r = omega.size();
  if (o_current.rows() != s || o_current.cols() != r)
    fail(ErrorKind::dimension_mismatch, "Bingham sampler shapes disagree");
  if (r == 0) return o_current;
  if (r == s) return sample_bingham_O(rng, scale * f.transpose() * f, omega, o_current);

  std::normal_distribution<double> normal(0.0, 1.0);
  const Index dim = s - r + 1;  // dimension of each column's feasible sphere
  Matrix o = o_current;
  for (Index i = 0; i < r; ++i) {
    Matrix rest(s, r - 1);
    for (Index j = 0, c = 0; j < r; ++j)
      if (j != i) rest.col(c++) = o.col(j);
    // A restricted to the complement P = I - rest rest^T has the nonzero
    // spectrum of (F P)(F P)^T = F F^T - (F rest)(F rest)^T.
    const Matrix fr = f * rest;
    // Eigenvectors of the downdated Gram matrix are outer * inner; the
    // product is never formed since only matrix-vector products are needed.
    Vector d;
    Matrix inner;
    const Matrix* outer = nullptr;
    std::optional<SymmetricEigen> fast;
    if (r == 1) {
      fast = SymmetricEigen{factor.gram_values, Matrix()};
    } else if (r == 2) {
      fast = diag_rank_one_downdate(factor.gram_values, factor.gram_vectors.transpose() * fr.col(0));
    }
    Eigen::SelfAdjointEigenSolver<Matrix> dense;
    if (fast) {
      d = fast->values;
      inner = std::move(fast->vectors);
      outer = &factor.gram_vectors;
    } else {
      dense.compute(f * f.transpose() - fr * fr.transpose());
      d = dense.eigenvalues();
      outer = &dense.eigenvectors();
    }
    const Index n = d.size();
    const double dmax = n ? d.maxCoeff() : 0.0;
    std::vector<Index> keep;
    for (Index j = n - 1; j >= 0 && static_cast<Index>(keep.size()) < dim; --j)
      if (d(j) > 1e-12 * dmax && d(j) > 0) keep.push_back(j);
    const Index m = static_cast<Index>(keep.size());
    Vector head(m);
    for (Index j = 0; j < m; ++j) head(j) = omega(i) * scale * d(keep[j]);
    // q maps explicit coordinates g to F-row space: q g = basis_keep D^{-1/2} g.
    const auto to_rows = [&](const Vector& g) -> Vector {
      Vector full = Vector::Zero(n);
      for (Index j = 0; j < m; ++j) full(keep[j]) = g(j) / std::sqrt(d(keep[j]));
      return inner.size() ? Vector(*outer * (inner * full)) : Vector(*outer * full);
    };
    const auto from_rows = [&](const Vector& z) -> Vector {
      const Vector t = inner.size() ? Vector(inner.transpose() * (outer->transpose() * z))
                                    : Vector(outer->transpose() * z);
      Vector g(m);
      for (Index j = 0; j < m; ++j) g(j) = t(keep[j]) / std::sqrt(d(keep[j]));
      return g;
    };
    const auto project = [&](const Vector& v) -> Vector { return v - rest * (rest.transpose() * v); };
    // Unit eigenvectors on the sphere are E = P F^T q, so E g = P F^T (q g).
    const SpectralBinghamDraw draw = sample_spectral_bingham(rng, head, 0.0, dim - m);
    Vector x = project(f.transpose() * to_rows(draw.head));
    if (dim - m > 0 && draw.tail_norm > 0) {
      Vector w(s);
      for (Index k = 0; k < s; ++k) w(k) = normal(rng);
      w = project(w);
      w -= project(f.transpose() * to_rows(from_rows(f * w)));
      x += draw.tail_norm * w.normalized();
    }
    o.col(i) = x / x.norm();
  }
  if (orthonormality_error(o) > 1e-10) {
    Eigen::HouseholderQR<Matrix> qr(o);
    Matrix qq = qr.householderQ() * Matrix::Identity(s, r);
    const Matrix rr = qr.matrixQR().topRows(r);
    for (Index j = 0; j < r; ++j)
      if (rr(j, j) < 0) qq.col(j) = -qq.col(j);
    o = qq;
  }
  return o;
}

}  // namespace covshare
