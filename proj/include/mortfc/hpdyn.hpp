#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "mortfc/forecast.hpp"
#include "mortfc/hpcurve.hpp"
#include "mortfc/lifetable.hpp"
#include "mortfc/rng.hpp"

namespace mortfc::hp {

/// Latent states psi_1..psi_T.
using HPPath = std::vector<HPVector>;

/// Random-walk hyperparameters: drift mu, innovation covariance Sigma and the
/// Huang-Wand auxiliaries alpha.
struct RWHyper {
  HPVector drift = HPVector::Zero();
  HPMatrix innovation = HPMatrix::Identity();
  HPVector aux = HPVector::Ones();
};

/// Fixed prior constants: mu ~ N(0, M^{-1}) with M = drift_precision * I,
/// Sigma | alpha ~ IW(nu + 7, 2 nu diag(1/alpha)), alpha_i ~ IG(1/2, 1/scale^2).
struct HyperPriorConstants {
  double drift_precision = 0.001;
  double nu = 2.0;
  double scale = 1e5;
};

/// Gaussian density helper for the innovation covariance.
class GaussianKernel {
 public:
  explicit GaussianKernel(const HPMatrix& cov);
  double log_pdf(const HPVector& x, const HPVector& mean) const;
  const HPMatrix& chol() const { return chol_; }
  const HPMatrix& precision() const { return precision_; }
  double log_det() const { return log_det_; }

 private:
  HPMatrix chol_;
  HPMatrix precision_;
  double log_det_ = 0.0;
};

/// Monte Carlo estimate of P(X in box) for X ~ N(mean, cov) with a frozen set
/// of standard normal draws, so repeated evaluations are smooth in (mean, cov).
/// Only bounded coordinates are checked.
class BoxProbability {
 public:
  BoxProbability(const TruncationBox& box, int draws, std::uint64_t seed);
  double operator()(const HPVector& mean, const HPMatrix& chol_lower) const;

 private:
  TruncationBox box_;
  Eigen::Matrix<double, kDim, Eigen::Dynamic> normals_;
};

enum class ProposalKind { independence, random_walk };
enum class ProposalStyle {
  /// N(m_t, c_t V_t) from the WLS fit, then random walk with c_t V_t.
  wls_informed,
  /// Random walk with c_t I in every sweep (baseline).
  isotropic,
};

/// Per-year proposal seeds and tuning.
struct HPProposalPlan {
  std::vector<HPVector> means;
  std::vector<HPMatrix> covs;
  std::vector<double> scales;
  /// Coordinates moved by the block update; the others stay fixed.
  std::array<bool, kDim> free{true, true, true, true, true, true, true, true};
};

/// The dynamic Heligman-Pollard posterior for one training grid.
class DynamicHPModel {
 public:
  DynamicHPModel(const MortalityGrid& grid, TruncationBox box = TruncationBox::defaults(),
                 HyperPriorConstants prior = {}, bool truncation_correction = false,
                 int truncation_draws = 4096, std::uint64_t seed = 1);

  int n_years() const { return static_cast<int>(deaths_.cols()); }
  const TruncationBox& box() const { return box_; }
  const HyperPriorConstants& prior() const { return prior_; }
  bool truncation_correction() const { return correction_; }
  int first_age() const { return first_age_; }
  int n_ages() const { return static_cast<int>(deaths_.rows()); }

  double year_loglik(int t, const HPVector& psi) const;

  /// log pi(theta): drift prior, inverse-Wishart given alpha, inverse-gamma on alpha.
  double log_hyperprior(const RWHyper& hyper) const;

  /// Transition density of psi_t given psi_{t-1}; subtracts log Z when the
  /// truncation correction is enabled.
  double log_transition(const HPVector& next, const HPVector& prev, const RWHyper& hyper,
                        const GaussianKernel& kernel) const;

  /// Full log posterior up to a constant; -inf for any state outside the box.
  double log_posterior(const HPPath& path, const RWHyper& hyper) const;

  /// Log full conditional of psi_t (likelihood at t plus adjacent transitions).
  double log_state_conditional(int t, const HPVector& psi_t, const HPPath& path, const RWHyper& hyper,
                               const GaussianKernel& kernel) const;

  /// One Metropolis-Hastings step on psi_t. Returns true when accepted.
  bool update_state_block(int t, HPPath& path, const RWHyper& hyper, const GaussianKernel& kernel,
                          const HPProposalPlan& plan, ProposalKind kind, Rng& rng) const;

  /// Gibbs updates of mu, Sigma, alpha (MH-corrected for truncation when enabled).
  RWHyper update_hypers(const HPPath& path, const RWHyper& hyper, Rng& rng) const;

  /// Box-probability estimate Z(mean, Sigma); 1 when the correction is disabled.
  double box_probability(const HPVector& mean, const HPMatrix& chol_lower) const;

 private:
  Eigen::MatrixXd deaths_;
  Eigen::MatrixXd exposures_;
  int first_age_;
  TruncationBox box_;
  HyperPriorConstants prior_;
  bool correction_;
  BoxProbability box_prob_;
};

struct HPChainConfig {
  long iterations = 60000;
  long burnin = 20000;
  long thin = 10;
  std::uint64_t seed = 1;
  double target_acceptance = 0.25;
  double initial_scale = 0.5;
  ProposalStyle style = ProposalStyle::wls_informed;
  bool truncation_correction = false;
  int truncation_draws = 4096;
  TruncationBox box = TruncationBox::defaults();
  std::array<bool, kDim> free{true, true, true, true, true, true, true, true};
};

struct HPDraw {
  long iteration = 0;
  HPPath path;
  RWHyper hyper;
};

/// Retained draws plus chain metadata.
struct HPPosterior {
  int first_age = 0;
  int n_ages = 0;
  int first_year = 0;
  int n_years = 0;
  std::uint64_t seed = 0;
  TruncationBox box = TruncationBox::defaults();
  std::vector<HPDraw> draws;
  std::vector<double> acceptance;
  std::vector<double> scales;
  /// Years whose WLS seed was borrowed from a neighbour.
  std::vector<int> borrowed_seeds;
  double hyper_acceptance = 1.0;

  int last_year() const { return first_year + n_years - 1; }
};

/// Per-year WLS seeds (m_t, V_t); failed years borrow the nearest successful
/// neighbour. Throws ValidationError when every year fails.
HPProposalPlan build_proposal_plan(const MortalityGrid& grid, const TruncationBox& box, double initial_scale,
                                   std::vector<int>* borrowed = nullptr);

/// Metropolis-within-Gibbs over states and hyperparameters. Reproducible given the seed.
HPPosterior run_chain(const MortalityGrid& grid, const HPChainConfig& config);

/// Forward-simulated states psi_{T+1..T+k} per retained draw: result[m][h-1].
std::vector<HPPath> simulate_forward_states(const HPPosterior& posterior, int horizon, Rng& rng,
                                            int gibbs_sweeps = 10);

/// Posterior-predictive death probabilities for horizons 1..k.
ForecastSet predict_forward(const HPPosterior& posterior, int horizon, Rng& rng, int gibbs_sweeps = 10);

}  // namespace mortfc::hp
