#pragma once
// Small helpers shared by the unit and acceptance suites.
#include "covshare/model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace covshare::testing {

inline Matrix gaussian(Rng& rng, Index rows, Index cols) {
  std::normal_distribution<double> z;
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = z(rng);
  return m;
}

inline Matrix random_orthonormal(Rng& rng, Index p, Index s) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(rng, p, s));
  return qr.householderQ() * Matrix::Identity(p, s);
}

inline Matrix random_spd(Rng& rng, Index p) {
  Matrix a = gaussian(rng, p, p);
  return a * a.transpose() + Matrix::Identity(p, p);
}

// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
inline double ks_distance(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, std::abs((i + 1) / n - f), std::abs(f - i / n)});
  }
  return d;
}

// Two-sample Kolmogorov-Smirnov distance.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

// Simpson's rule on [a, b] with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels = 4000) {
  const double h = (b - a) / panels;
  double acc = f(a) + f(b);
  for (int i = 1; i < panels; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

// Total variation between a histogram of `xs` on [lo, hi) and a density known
// up to a constant, integrated per bin by Simpson's rule.
inline double histogram_tv(const std::vector<double>& xs, const std::function<double(double)>& density, double lo,
                           double hi, int bins) {
  std::vector<double> counts(bins, 0.0), mass(bins, 0.0);
  const double w = (hi - lo) / bins;
  for (double x : xs) {
    int b = static_cast<int>((x - lo) / w);
    b = std::clamp(b, 0, bins - 1);
    counts[b] += 1.0;
  }
  double total = 0.0;
  for (int b = 0; b < bins; ++b) {
    mass[b] = simpson(density, lo + b * w, lo + (b + 1) * w, 40);
    total += mass[b];
  }
  double tv = 0.0;
  for (int b = 0; b < bins; ++b) tv += std::abs(counts[b] / xs.size() - mass[b] / total);
  return 0.5 * tv;
}

// CDF of a density on [lo, hi] known through its log, tabulated by the
// trapezoid rule on a fine grid and interpolated linearly.
class GridCdf {
 public:
  GridCdf(const std::function<double(double)>& log_density, double lo, double hi, int cells = 200000)
      : lo_(lo), hi_(hi), cdf_(cells + 1, 0.0) {
    const double h = (hi - lo) / cells;
    std::vector<double> lf(cells + 1);
    double top = -1e300;
    for (int i = 0; i <= cells; ++i) {
      lf[i] = log_density(lo + i * h);
      top = std::max(top, lf[i]);
    }
    for (int i = 1; i <= cells; ++i)
      cdf_[i] = cdf_[i - 1] + 0.5 * h * (std::exp(lf[i - 1] - top) + std::exp(lf[i] - top));
    for (double& c : cdf_) c /= cdf_.back();
  }
  double operator()(double x) const {
    if (x <= lo_) return 0.0;
    if (x >= hi_) return 1.0;
    const double pos = (x - lo_) / (hi_ - lo_) * (cdf_.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - i;
    return i + 1 < cdf_.size() ? cdf_[i] + frac * (cdf_[i + 1] - cdf_[i]) : 1.0;
  }

 private:
  double lo_, hi_;
  std::vector<double> cdf_;
};

// Independent ascent for trace objectives: projected gradient with a polar
// (SVD) retraction and a fixed step.
template <class Objective>
double polar_ascent(const Objective& obj, Matrix v, double step, int iters) {
  for (int it = 0; it < iters; ++it) {
    Matrix g = obj.gradient(v);
    Matrix y = v + step * (g - v * (v.transpose() * g));
    Eigen::JacobiSVD<Matrix> svd(y, Eigen::ComputeThinU | Eigen::ComputeThinV);
    v = svd.matrixU() * svd.matrixV().transpose();
  }
  return obj.value(v);
}

}  // namespace covshare::testing
