#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "mortfc/forecast.hpp"
#include "mortfc/lifetable.hpp"
#include "mortfc/rng.hpp"

namespace mortfc::gmrf {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Age x year lattice. Vectors are stored age-major: cell (z, t) sits at
/// z * n_years + t, so block z holds years 0..n_years-1 of that age.
struct LatticeShape {
  int n_ages = 1;
  int n_years = 1;

  Eigen::Index size() const { return static_cast<Eigen::Index>(n_ages) * n_years; }
  Eigen::Index index(int z, int t) const { return static_cast<Eigen::Index>(z) * n_years + t; }
  /// Rank of the intrinsic precision.
  Eigen::Index rank() const { return size() - 1; }
};

/// tau > 0, rho_age in (0,2); rho_year is always 2 - rho_age.
struct GMRFHyper {
  double tau = 1.0;
  double rho_age = 1.0;
  double drift = 0.0;

  double rho_year() const { return 2.0 - rho_age; }
  void validate() const;
};

/// First-difference structure matrix R_n: diagonal (1, 2, ..., 2, 1), -1 off-diagonal.
SparseMatrix structure_matrix(int n);

/// Eigenvalues 2 - 2 cos(i pi / n), i = 0..n-1, of structure_matrix(n).
Eigen::VectorXd structure_eigenvalues(int n);

/// Q = tau (rho_age R_age (x) I_T + rho_year I_age (x) R_T) with cached
/// eigenvalues of both factors.
class PrecisionOperator {
 public:
  PrecisionOperator(LatticeShape shape, const GMRFHyper& hyper);

  const SparseMatrix& matrix() const { return q_; }
  /// Q x as weighted sums of neighbour differences, so constant vectors map to exactly zero.
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  const Eigen::VectorXd& age_eigenvalues() const { return age_eigs_; }
  const Eigen::VectorXd& year_eigenvalues() const { return year_eigs_; }
  LatticeShape shape() const { return shape_; }

 private:
  LatticeShape shape_;
  GMRFHyper hyper_;
  SparseMatrix q_;
  Eigen::VectorXd age_eigs_;
  Eigen::VectorXd year_eigs_;
};

PrecisionOperator build_precision(LatticeShape shape, const GMRFHyper& hyper);

/// Sums of squared neighbour differences along ages and along years:
/// d' (R_age (x) I) d and d' (I (x) R_T) d.
std::pair<double, double> neighbour_quadratics(const Eigen::VectorXd& d, LatticeShape shape);

/// Generalized log-determinant: sum over (i,j) != (0,0) of
/// log(tau (rho_age lambda_i + rho_year gamma_j)).
double gen_log_det(const GMRFHyper& hyper, LatticeShape shape);

/// Mean t * b at every age for years first_year_index .. first_year_index + n_years - 1 (1-based t).
Eigen::VectorXd prior_mean(double drift, LatticeShape shape, int first_year_index = 1);

/// Deaths and exposures flattened in lattice order.
struct BinomialData {
  LatticeShape shape;
  Eigen::VectorXd deaths;
  Eigen::VectorXd exposures;

  static BinomialData from_grid(const MortalityGrid& grid);
};

/// sum d x - n log(1 + e^x); binomial coefficient omitted.
double loglik(const Eigen::VectorXd& x, const BinomialData& data);
/// d - n logistic(x).
Eigen::VectorXd grad_loglik(const Eigen::VectorXd& x, const BinomialData& data);

/// Log-likelihood and its gradient at x.
using LikelihoodFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

LikelihoodFn binomial_likelihood(const BinomialData& data);

/// Current latent state with cached likelihood value and gradient.
struct LatentState {
  Eigen::VectorXd x;
  double loglik = 0.0;
  Eigen::VectorXd grad;
};

LatentState make_state(Eigen::VectorXd x, const LikelihoodFn& lik);

/// Gradient-based auxiliary sampler for a latent Gaussian target
/// N(mu, Q^{-1}) x likelihood.
///
/// Each step draws u ~ N(x + (delta/2) g(x), (delta/2) I), then a proposal
/// from the Gaussian with precision Q + (2/delta) I and linear term
/// (2/delta) u + Q mu, and accepts with the likelihood ratio times
/// exp(f(u, y) - f(u, x)), f(u, x) = (u - x - (delta/4) g(x))' g(x).
/// The sparsity pattern is analyzed once; each step refactorizes numerically.
class AuxiliaryGradientSampler {
 public:
  explicit AuxiliaryGradientSampler(const SparseMatrix& precision_pattern);

  struct Step {
    bool accepted = false;
    double log_alpha = 0.0;
  };

  /// Q must share the pattern passed at construction; q_mu = Q * mu.
  Step step(LatentState& state, const SparseMatrix& q, const Eigen::VectorXd& q_mu, double delta,
            const LikelihoodFn& lik, Rng& rng);

 private:
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt_;
  SparseMatrix identity_;
};

struct GMRFPriors {
  double tau_shape = 1.0;
  double tau_rate = 0.005;
  double drift_variance = 1e6;
};

/// One auxiliary-sampler step for the mortality surface.
bool aux_sample_step(LatentState& state, const GMRFHyper& hyper, const BinomialData& data, double delta,
                     AuxiliaryGradientSampler& sampler, Rng& rng);

struct HyperUpdate {
  GMRFHyper hyper;
  bool rho_accepted = false;
};

/// tau and b drawn from their conditionals, rho_age by random-walk MH on
/// logit(rho_age / 2) with step size rho_step.
HyperUpdate update_hyper_gmrf(const Eigen::VectorXd& x, const GMRFHyper& hyper, LatticeShape shape,
                              const GMRFPriors& priors, double rho_step, Rng& rng);

/// Log conditional density of rho_age given x, tau, b (uniform prior), up to a constant.
double log_rho_conditional(double rho_age, const Eigen::VectorXd& x, const GMRFHyper& hyper, LatticeShape shape);

struct GMRFChainConfig {
  long iterations = 20000;
  long burnin = 5000;
  long thin = 10;
  std::uint64_t seed = 1;
  double target_acceptance = 0.55;
  double rho_target_acceptance = 0.35;
  /// Non-positive: choose from the curvature of the likelihood at the start.
  double initial_delta = 0.0;
  double initial_rho_step = 0.5;
  GMRFPriors priors;
};

struct GMRFDraw {
  long iteration = 0;
  Eigen::VectorXd x;
  GMRFHyper hyper;
};

struct GMRFPosterior {
  int first_age = 0;
  int first_year = 0;
  LatticeShape shape;
  std::uint64_t seed = 0;
  std::vector<GMRFDraw> draws;
  double acceptance = 0.0;
  double rho_acceptance = 0.0;
  double delta = 0.0;
  double rho_step = 0.0;

  int last_year() const { return first_year + shape.n_years - 1; }
};

/// Empirical logit log((d + 0.5) / (n - d + 0.5)) per cell.
Eigen::VectorXd empirical_logit(const BinomialData& data);

GMRFPosterior run_chain_gmrf(const MortalityGrid& grid, const GMRFChainConfig& config);

/// Conditional law of the future years T+1..T+k given the observed surface:
/// N(mu_f - Q_ff^{-1} Q_fo (x - mu_o), Q_ff^{-1}). Future vectors are
/// age-major over the k future years.
class FutureConditional {
 public:
  FutureConditional(LatticeShape observed, int horizon, const GMRFHyper& hyper);

  Eigen::VectorXd mean(const Eigen::VectorXd& x_observed) const;
  Eigen::MatrixXd covariance() const;
  Eigen::VectorXd sample(const Eigen::VectorXd& x_observed, Rng& rng) const;
  int horizon() const { return horizon_; }

 private:
  LatticeShape observed_;
  int horizon_;
  GMRFHyper hyper_;
  SparseMatrix q_ff_;
  SparseMatrix q_fo_;
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt_;
};

/// Posterior-predictive death probabilities for horizons 1..k.
ForecastSet predict_gmrf(const GMRFPosterior& posterior, int horizon, Rng& rng);

}  // namespace mortfc::gmrf
