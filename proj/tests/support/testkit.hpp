#pragma once

// Shared oracles and synthetic data for the unit and acceptance tests.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mortfc/gmrf.hpp"
#include "mortfc/hpcurve.hpp"
#include "mortfc/lifetable.hpp"
#include "mortfc/rng.hpp"

namespace testkit {

// Two-sided KS distance between a sample and a CDF.
inline double ks_distance(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const auto n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

// CDF of an unnormalized 1-D log density on [lo, hi], tabulated with the
// trapezoid rule on `cells` intervals and interpolated linearly.
class QuadratureCdf {
 public:
  QuadratureCdf(const std::function<double(double)>& log_density, double lo, double hi, int cells = 20000)
      : lo_(lo), hi_(hi), h_((hi - lo) / cells), cdf_(static_cast<std::size_t>(cells) + 1, 0.0) {
    std::vector<double> lp(cdf_.size());
    double peak = -INFINITY;
    for (std::size_t i = 0; i < lp.size(); ++i) {
      lp[i] = log_density(lo + h_ * static_cast<double>(i));
      peak = std::max(peak, lp[i]);
    }
    for (std::size_t i = 1; i < lp.size(); ++i) {
      cdf_[i] = cdf_[i - 1] + 0.5 * h_ * (std::exp(lp[i - 1] - peak) + std::exp(lp[i] - peak));
    }
    const double total = cdf_.back();
    for (double& c : cdf_) c /= total;
  }

  double operator()(double x) const {
    if (x <= lo_) return 0.0;
    if (x >= hi_) return 1.0;
    const double pos = (x - lo_) / h_;
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= cdf_.size()) return 1.0;
    const double frac = pos - static_cast<double>(i);
    return cdf_[i] + frac * (cdf_[i + 1] - cdf_[i]);
  }

  double mean() const {
    double m = 0.0;
    for (std::size_t i = 1; i < cdf_.size(); ++i) {
      m += (lo_ + h_ * (static_cast<double>(i) - 0.5)) * (cdf_[i] - cdf_[i - 1]);
    }
    return m;
  }

 private:
  double lo_, hi_, h_;
  std::vector<double> cdf_;
};

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Binomial draw by normal approximation with continuity rounding; exact
// enough for the large exposures used in the synthetic studies.
inline double binomial_draw(double n, double p, mortfc::Rng& rng) {
  const double sd = std::sqrt(n * p * (1.0 - p));
  return std::clamp(std::round(n * p + sd * rng.normal()), 0.0, n);
}

// Smooth logit surface: a Gompertz-like age trend with a mild hump and a
// steady improvement over years.
inline Eigen::MatrixXd smooth_logit_surface(int n_ages, int n_years) {
  Eigen::MatrixXd x(n_ages, n_years);
  for (int z = 0; z < n_ages; ++z) {
    for (int t = 0; t < n_years; ++t) {
      const double age = z;
      x(z, t) = -9.0 + 0.085 * age + 0.6 * std::exp(-0.5 * std::pow((age - 22.0) / 5.0, 2)) +
                1.8 * std::exp(-age / 2.0) - 0.015 * t;
    }
  }
  return x;
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline mortfc::MortalityGrid grid_from_probs(const Eigen::MatrixXd& p, double exposure, mortfc::Rng& rng,
                                             int first_age = 0, int first_year = 1) {
  Eigen::MatrixXd d(p.rows(), p.cols());
  const Eigen::MatrixXd n = Eigen::MatrixXd::Constant(p.rows(), p.cols(), exposure);
  for (Eigen::Index z = 0; z < p.rows(); ++z) {
    for (Eigen::Index t = 0; t < p.cols(); ++t) d(z, t) = binomial_draw(exposure, p(z, t), rng);
  }
  return mortfc::MortalityGrid(first_age, first_year, d, n);
}

// Plausible Heligman-Pollard parameters for a low-mortality female population.
inline mortfc::hp::HPNatural reference_hp() {
  return {0.0005, 0.02, 0.11, 0.0004, 8.0, 22.0, 0.00003, 1.1};
}

// A psi path drifting slowly inside the default box.
inline std::vector<mortfc::hp::HPVector> reference_hp_path(int years, mortfc::Rng& rng) {
  using mortfc::hp::HPVector;
  const HPVector start = mortfc::hp::transform(reference_hp());
  HPVector drift;
  drift << -0.03, 0.0, 0.0, -0.01, 0.0, 0.0, -0.02, 0.001;
  std::vector<HPVector> path;
  HPVector psi = start;
  for (int t = 0; t < years; ++t) {
    path.push_back(psi);
    for (int i = 0; i < mortfc::hp::kDim; ++i) psi[i] += drift[i] + 0.01 * rng.normal();
  }
  return path;
}

inline Eigen::MatrixXd hp_probs(const std::vector<mortfc::hp::HPVector>& path, int n_ages) {
  Eigen::MatrixXd p(n_ages, static_cast<Eigen::Index>(path.size()));
  for (std::size_t t = 0; t < path.size(); ++t) {
    for (int z = 0; z < n_ages; ++z) p(z, static_cast<Eigen::Index>(t)) = mortfc::hp::hp_prob(z, path[t]);
  }
  return p;
}

// Dense copy of a sparse matrix.
inline Eigen::MatrixXd dense(const mortfc::gmrf::SparseMatrix& s) { return Eigen::MatrixXd(s); }

}  // namespace testkit
