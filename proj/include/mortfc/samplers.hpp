#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>

#include "mortfc/rng.hpp"

namespace mortfc::samplers {

/// Draw from N(mean, sd^2) restricted to [lo, hi]. Either bound may be infinite.
///
/// Moderate standardized bounds use inversion of the normal CDF on the side
/// with the better-conditioned tail; bounds beyond 5 sd on one side use
/// exponential-proposal rejection. Throws ValidationError when lo >= hi or
/// sd <= 0.
double rtruncnorm(double mean, double sd, double lo, double hi, Rng& rng);

/// Coordinate-wise Gibbs sampler for the box-truncated Gaussian N(mean, cov; lo, hi).
///
/// Starts from the mean clamped into the box unless `start` is given, and
/// returns the state after `sweeps` full sweeps. Throws NumericalError when
/// cov is not SPD.
Eigen::VectorXd rtmvnorm_gibbs(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                               const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, int sweeps,
                               Rng& rng, const Eigen::VectorXd* start = nullptr);

/// Inverse-Wishart draw with density proportional to
/// |X|^{-(df+p+1)/2} exp(-tr(scale X^{-1}) / 2), so E[X] = scale / (df - p - 1).
Eigen::MatrixXd rinvwishart(double df, const Eigen::MatrixXd& scale, Rng& rng);

/// Inverse-gamma draw with density proportional to x^{-shape-1} exp(-rate / x).
double rinvgamma(double shape, double rate, Rng& rng);

/// Gamma draw, shape/rate parameterization.
double rgamma(double shape, double rate, Rng& rng);

/// Draw from N(mean, cov) given the lower Cholesky factor of cov.
Eigen::VectorXd rmvnorm_chol(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower, Rng& rng);

struct EssEstimate {
  double ess = 0.0;
  /// Constant series: ESS reported as the series length.
  bool degenerate = false;
};

/// Effective sample size s^2 M / g0 where g0 is the spectral density at zero
/// estimated with Geyer's initial positive sequence. Clipped to (0, M].
/// Requires at least 10 values.
EssEstimate ess(std::span<const double> series);

/// One Robbins-Monro step on a log tuning scale with gain iteration^-0.6.
double robbins_monro_adapt(double log_scale, bool accepted, double target, long iteration);

/// Stateful wrapper that freezes after burn-in and tracks acceptance.
class AdaptiveScale {
 public:
  AdaptiveScale(double initial_scale, double target, long burnin)
      : log_scale_(std::log(initial_scale)), target_(target), burnin_(burnin) {}

  double scale() const { return std::exp(log_scale_); }
  double log_scale() const { return log_scale_; }
  double target() const { return target_; }

  /// Record an MH outcome at (1-based) iteration. Adapts only while iteration <= burnin.
  void record(bool accepted, long iteration) {
    if (iteration <= burnin_) {
      log_scale_ = robbins_monro_adapt(log_scale_, accepted, target_, iteration);
    } else {
      ++post_proposals_;
      if (accepted) ++post_accepts_;
    }
    ++proposals_;
    if (accepted) ++accepts_;
  }

  /// Acceptance rate after burn-in, or overall when no post-burn-in steps were taken.
  double acceptance_rate() const {
    if (post_proposals_ > 0) return static_cast<double>(post_accepts_) / post_proposals_;
    return proposals_ > 0 ? static_cast<double>(accepts_) / proposals_ : 0.0;
  }

 private:
  double log_scale_;
  double target_;
  long burnin_;
  long proposals_ = 0;
  long accepts_ = 0;
  long post_proposals_ = 0;
  long post_accepts_ = 0;
};

}  // namespace mortfc::samplers
