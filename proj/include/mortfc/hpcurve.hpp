#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

namespace mortfc::hp {

inline constexpr int kDim = 8;

/// Transformed Heligman-Pollard parameters (A~, B~, C~, D~, E~, F~, G~, H~), each on the real line.
using HPVector = Eigen::Matrix<double, kDim, 1>;
using HPMatrix = Eigen::Matrix<double, kDim, kDim>;

/// Natural-scale Heligman-Pollard parameters.
/// A, B, C, D, G in (0,1); E, H in (0,inf); F in (10,40).
struct HPNatural {
  double A = 0.0;
  double B = 0.0;
  double C = 0.0;
  double D = 0.0;
  double E = 0.0;
  double F = 0.0;
  double G = 0.0;
  double H = 0.0;
};

/// Coordinate-wise bounds on the transformed vector. Infinite bounds allowed.
struct TruncationBox {
  HPVector lower;
  HPVector upper;

  /// 1% / 99% prior percentile bounds used for the dynamic model.
  static TruncationBox defaults();
  /// Unbounded in every coordinate.
  static TruncationBox unbounded();

  bool contains(const HPVector& psi) const;
  HPVector clamp(const HPVector& psi) const;
};

/// Logit for A, B, C, D, G; log for E, H; logit of (F-10)/30 for F.
/// Throws ValidationError when a parameter is on or outside its support boundary.
HPVector transform(const HPNatural& p);
HPNatural inverse_transform(const HPVector& psi);

/// Odds of death K(z) = A^{(z+B)^C} + D exp(-E (log z - log F)^2) + G H^z.
/// The middle term is taken as its limit 0 at z = 0.
double hp_odds(int age, const HPNatural& p);
double hp_odds(int age, const HPVector& psi);

/// Death probability K / (1 + K).
double hp_prob(int age, const HPNatural& p);
double hp_prob(int age, const HPVector& psi);

/// Odds and their gradient with respect to the transformed vector.
struct OddsGradient {
  double odds = 0.0;
  HPVector grad = HPVector::Zero();
};
OddsGradient hp_odds_grad(int age, const HPNatural& p);

/// Binomial log-likelihood kernel for one calendar year:
/// sum_z d_z log K(z) - n_z log(1 + K(z)), ages first_age, first_age+1, ...
/// The binomial coefficient is omitted.
double year_loglik(const HPVector& psi, const Eigen::Ref<const Eigen::VectorXd>& deaths,
                   const Eigen::Ref<const Eigen::VectorXd>& exposures, int first_age);

/// Analytic gradient of year_loglik with respect to psi.
HPVector year_loglik_grad(const HPVector& psi, const Eigen::Ref<const Eigen::VectorXd>& deaths,
                          const Eigen::Ref<const Eigen::VectorXd>& exposures, int first_age);

/// Starting point used when no previous-year estimate is available.
HPVector default_start();

struct WlsOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-8;
  double initial_damping = 1e-3;
};

enum class WlsStatus { gradient_tolerance, stalled, max_iterations };

struct WlsResult {
  HPVector mean = HPVector::Zero();
  /// Gauss-Newton covariance, repaired to SPD.
  HPMatrix cov = HPMatrix::Identity();
  WlsStatus status = WlsStatus::max_iterations;
  int iterations = 0;
  double objective = 0.0;
  /// Objective after each accepted step, starting with the initial value.
  std::vector<double> objective_trace;

  bool converged() const { return status != WlsStatus::max_iterations; }
};

/// Weighted least squares fit of hp_prob to one year of empirical rates with
/// weights 1/q^2, projected onto the truncation box.
///
/// Zero rates are replaced by 0.5/n in the weights. Damped Gauss-Newton with
/// Marquardt scaling; bound-active coordinates are held fixed for a step.
/// Non-convergence yields status max_iterations with the best iterate.
/// Throws NumericalError when the information matrix stays singular after
/// jitter escalation.
WlsResult wls_fit(const Eigen::Ref<const Eigen::VectorXd>& rates, const Eigen::Ref<const Eigen::VectorXd>& exposures,
                  int first_age, const TruncationBox& box, const std::optional<HPVector>& start = std::nullopt,
                  const WlsOptions& options = {});

/// Add growing multiples of (trace/dim) I until the matrix factors, starting
/// at 1e-10 and doubling up to 1e-4. Throws NumericalError if it never does.
HPMatrix repair_spd(const HPMatrix& m);

}  // namespace mortfc::hp
