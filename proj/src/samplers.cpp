#include "mortfc/samplers.hpp"

#include <algorithm>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "mortfc/errors.hpp"

namespace mortfc::samplers {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTailCut = 5.0;

// Standard normal upper tail Q(x) = P(Z > x).
double upper_tail(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

// Inverse of upper_tail on (0, 1).
double upper_tail_inv(double q) {
  q = std::clamp(q, 1e-300, 1.0 - 1e-16);
  return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q);
}

// Standard normal restricted to [a, b] with a >= kTailCut (right tail only).
double right_tail_draw(double a, double b, Rng& rng) {
  if (std::isfinite(b) && (b - a) * a < 1.0) {
    // Narrow interval: uniform proposal, density ratio against the peak at a.
    for (;;) {
      const double z = a + (b - a) * rng.uniform();
      if (std::log(rng.uniform_open()) <= 0.5 * (a * a - z * z)) return z;
    }
  }
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double z = a - std::log(rng.uniform_open()) / rate;
    if (z > b) continue;
    const double diff = z - rate;
    if (std::log(rng.uniform_open()) <= -0.5 * diff * diff) return z;
  }
}

// Standard normal restricted to [a, b].
double std_truncnorm(double a, double b, Rng& rng) {
  if (a >= kTailCut) return right_tail_draw(a, b, rng);
  if (b <= -kTailCut) return -right_tail_draw(-b, -a, rng);
  if (a >= 0.0) {
    const double qa = upper_tail(a);
    const double qb = upper_tail(b);
    return upper_tail_inv(qb + rng.uniform_open() * (qa - qb));
  }
  if (b <= 0.0) {
    const double qa = upper_tail(-b);
    const double qb = upper_tail(-a);
    return -upper_tail_inv(qb + rng.uniform_open() * (qa - qb));
  }
  // Interval straddles zero: invert the lower CDF.
  const double pa = upper_tail(-a);
  const double pb = upper_tail(-b);
  const double u = pa + rng.uniform_open() * (pb - pa);
  return -upper_tail_inv(u);
}

}  // namespace

double rtruncnorm(double mean, double sd, double lo, double hi, Rng& rng) {
  if (!(lo < hi)) throw ValidationError("rtruncnorm: lower bound must be below upper bound");
  if (!(sd > 0.0)) throw ValidationError("rtruncnorm: sd must be positive");
  const double a = (lo - mean) / sd;
  const double b = (hi - mean) / sd;
  const double z = std::clamp(std_truncnorm(a, b, rng), a, b);
  return std::clamp(mean + sd * z, lo, hi);
}

Eigen::VectorXd rtmvnorm_gibbs(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                               const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, int sweeps,
                               Rng& rng, const Eigen::VectorXd* start) {
  const Eigen::Index n = mean.size();
  if (cov.rows() != n || cov.cols() != n || lo.size() != n || hi.size() != n) {
    throw ValidationError("rtmvnorm_gibbs: dimension mismatch");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(lo[i] < hi[i])) throw ValidationError("rtmvnorm_gibbs: empty box");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("rtmvnorm_gibbs: covariance not SPD");
  const Eigen::MatrixXd precision = llt.solve(Eigen::MatrixXd::Identity(n, n));

  Eigen::VectorXd x = start ? *start : mean;
  for (Eigen::Index i = 0; i < n; ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);

  for (int s = 0; s < sweeps; ++s) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double pii = precision(i, i);
      double shift = precision.row(i).dot(x - mean) - pii * (x[i] - mean[i]);
      const double cond_mean = mean[i] - shift / pii;
      x[i] = rtruncnorm(cond_mean, 1.0 / std::sqrt(pii), lo[i], hi[i], rng);
    }
  }
  return x;
}

Eigen::MatrixXd rinvwishart(double df, const Eigen::MatrixXd& scale, Rng& rng) {
  const Eigen::Index p = scale.rows();
  if (scale.cols() != p) throw ValidationError("rinvwishart: scale must be square");
  if (!(df > static_cast<double>(p) - 1.0)) throw ValidationError("rinvwishart: df must exceed dim - 1");
  Eigen::LLT<Eigen::MatrixXd> llt(scale);
  if (llt.info() != Eigen::Success) throw ValidationError("rinvwishart: scale not SPD");
  const Eigen::MatrixXd chol = llt.matrixL();

  // Bartlett factor of a standard Wishart(df, I) draw.
  Eigen::MatrixXd bartlett = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    std::chi_squared_distribution<double> chi(df - static_cast<double>(i));
    bartlett(i, i) = std::sqrt(chi(rng));
    for (Eigen::Index j = 0; j < i; ++j) bartlett(i, j) = rng.normal();
  }
  // X = (L A^{-T}) (L A^{-T})^T is the inverse of L^{-T} A A^T L^{-1} ~ Wishart(df, scale^{-1}).
  const Eigen::MatrixXd a_inv_t =
      bartlett.transpose().triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd factor = chol * a_inv_t;
  Eigen::MatrixXd x = factor * factor.transpose();
  return 0.5 * (x + x.transpose());
}

double rgamma(double shape, double rate, Rng& rng) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw ValidationError("rgamma: shape and rate must be positive");
  std::gamma_distribution<double> g(shape, 1.0 / rate);
  return g(rng);
}

double rinvgamma(double shape, double rate, Rng& rng) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw ValidationError("rinvgamma: shape and rate must be positive");
  std::gamma_distribution<double> g(shape, 1.0);
  double draw;
  do {
    draw = g(rng);
  } while (draw <= 0.0);
  return rate / draw;
}

Eigen::VectorXd rmvnorm_chol(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower, Rng& rng) {
  Eigen::VectorXd z(mean.size());
  std::normal_distribution<double> nd;
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = nd(rng);
  return mean + chol_lower.triangularView<Eigen::Lower>() * z;
}

EssEstimate ess(std::span<const double> series) {
  const std::size_t m = series.size();
  if (m < 10) throw ValidationError("ess: series must contain at least 10 values");
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(m);

  auto autocov = [&](std::size_t lag) {
    double acc = 0.0;
    for (std::size_t i = 0; i + lag < m; ++i) acc += (series[i] - mean) * (series[i + lag] - mean);
    return acc / static_cast<double>(m);
  };

  const double gamma0 = autocov(0);
  const double md = static_cast<double>(m);
  if (!(gamma0 > 1e-300 * std::max(1.0, mean * mean)) ) return {md, true};

  // Geyer initial positive sequence over paired lags.
  double pair_sum = 0.0;
  for (std::size_t k = 0; k + 1 < m; k += 2) {
    const double pair = autocov(k) + autocov(k + 1);
    if (!(pair > 0.0)) break;
    pair_sum += pair;
  }
  const double spectral0 = -gamma0 + 2.0 * pair_sum;
  if (!(spectral0 > 0.0)) return {md, false};
  return {std::clamp(gamma0 * md / spectral0, std::numeric_limits<double>::min(), md), false};
}

double robbins_monro_adapt(double log_scale, bool accepted, double target, long iteration) {
  const double gain = std::pow(static_cast<double>(std::max(iteration, 1L)), -0.6);
  return log_scale + gain * ((accepted ? 1.0 : 0.0) - target);
}

}  // namespace mortfc::samplers
