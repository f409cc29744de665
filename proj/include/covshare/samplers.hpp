#pragma once

// Exact samplers for the full conditionals of the projected spiked model.

#include "covshare/model.hpp"

#include <optional>
#include <span>

namespace covshare {

/// Draw from inverse-gamma(shape, rate).
double sample_inverse_gamma(Rng& rng, double shape, double rate);

/// sigma2 | rest ~ inverse-gamma(n p / 2, tr[S (I - U Omega U^T)] / 2), U = V O.
/// `vsv` is V^T S V and `trace_s` is tr(S).
double sample_sigma2(Rng& rng, const Eigen::Ref<const Matrix>& vsv, double trace_s, Index p, int n,
                     const Eigen::Ref<const Matrix>& o, const Eigen::Ref<const Vector>& omega);

/// Unnormalized log density of omega | rest: (n/2) log(1 - w) + c w n / 2.
double omega_log_density(double omega, double c, double n);
/// Mode of the omega conditional, max(0, (c - 1) / c).
double omega_mode(double c);

/// omega | rest with density proportional to (1 - w)^{n/2} exp(c w n / 2) on [0, 1).
/// 1 - omega is a Gamma(n/2 + 1, rate c n / 2) variable truncated to (0, 1] and
/// is drawn by inverse CDF.
double sample_omega(Rng& rng, double c, double n);

/// Shared omega with density prod_k (1 - w)^{n_k/2} exp(c_k w n_k / 2).
double sample_omega_pooled(Rng& rng, std::span<const double> c, std::span<const int> n);

/// Bingham draw in spectral coordinates: density exp(x^T C x) on the unit
/// sphere of R^{m + tail_dim}, C = diag(head, tail I). Returns the m explicit
/// coordinates and the norm of the (isotropic) tail block.
struct SpectralBinghamDraw {
  Vector head;
  double tail_norm = 0.0;
};
SpectralBinghamDraw sample_spectral_bingham(Rng& rng, const Eigen::Ref<const Vector>& head, double tail,
                                            Index tail_dim);

/// Vector Bingham on the unit sphere in R^q: density proportional to exp(x^T C x).
/// Rejection sampler with an angular central Gaussian envelope.
Vector sample_vector_bingham(Rng& rng, const Eigen::Ref<const Matrix>& c);

/// Matrix Bingham on V_{s,r}: density proportional to etr(Omega O^T A O).
/// Performs one Gibbs sweep starting from `o` (column-wise updates when r < s,
/// pairwise rotations when r == s) and returns the new frame.
Matrix sample_bingham_O(Rng& rng, const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Vector>& omega,
                        const Eigen::Ref<const Matrix>& o);

/// A wide factor F (m x s, m << s) with A = F^T F, plus the spectrum of the
/// small Gram matrix F F^T, computed once and reused across sweeps.
struct WideFactor {
  Matrix f;
  Matrix gram_vectors;  // m x m
  Vector gram_values;   // ascending

  static WideFactor from(Matrix f);
};

/// The Bingham sweep of sample_bingham_O for A = scale * F^T F. Each column
/// update needs the spectrum of F F^T minus a rank r - 1 term; for r = 2 that
/// is a rank-one downdate solved in O(m^2).
Matrix sample_bingham_O_factor(Rng& rng, const WideFactor& factor, double scale,
                               const Eigen::Ref<const Vector>& omega, const Eigen::Ref<const Matrix>& o);

struct SymmetricEigen {
  Vector values;  // ascending
  Matrix vectors;
};

/// Eigen-decomposition of diag(d) - w w^T for ascending d, via the secular
/// equation. Returns nullopt when two active poles are too close to separate
/// reliably; callers then use a dense solver.
std::optional<SymmetricEigen> diag_rank_one_downdate(const Eigen::Ref<const Vector>& d,
                                                     const Eigen::Ref<const Vector>& w);

/// Log density (unnormalized) of the matrix Bingham at O.
double bingham_log_density(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Vector>& omega,
                           const Eigen::Ref<const Matrix>& o);

/// Flips columns so that the first entry with |x| > 1e-12 is positive.
void canonicalize_signs(Matrix& o);

/// Orthonormal basis of the orthogonal complement of the columns of `a` (s x k, orthonormal).
Matrix orthogonal_complement(const Eigen::Ref<const Matrix>& a, Index s);

}  // namespace covshare
