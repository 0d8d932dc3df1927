#include "mortfc/gmrf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mortfc/errors.hpp"
#include "mortfc/samplers.hpp"

namespace mortfc::gmrf {

namespace {

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

SparseMatrix sparse_identity(Eigen::Index n) {
  SparseMatrix id(n, n);
  id.setIdentity();
  return id;
}

// Rows of the selection matrix pick the listed lattice indices.
SparseMatrix selection(const std::vector<Eigen::Index>& rows, Eigen::Index n) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) trip.emplace_back(static_cast<Eigen::Index>(i), rows[i], 1.0);
  SparseMatrix s(static_cast<Eigen::Index>(rows.size()), n);
  s.setFromTriplets(trip.begin(), trip.end());
  return s;
}

double rho_log_target(double rho, double tau, double s_age, double s_year, LatticeShape shape) {
  return 0.5 * gen_log_det(GMRFHyper{tau, rho, 0.0}, shape) - 0.5 * tau * (rho * s_age + (2.0 - rho) * s_year);
}

}  // namespace

void GMRFHyper::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ValidationError("GMRF precision tau must be positive");
  if (!(rho_age > 0.0 && rho_age < 2.0)) throw ValidationError("rho_age must lie in (0,2)");
  if (!std::isfinite(drift)) throw ValidationError("GMRF drift must be finite");
}

SparseMatrix structure_matrix(int n) {
  if (n < 1) throw ValidationError("structure matrix needs n >= 1");
  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i < n; ++i) {
    const double diag = (n == 1) ? 0.0 : (i == 0 || i == n - 1) ? 1.0 : 2.0;
    trip.emplace_back(i, i, diag);
    if (i + 1 < n) {
      trip.emplace_back(i, i + 1, -1.0);
      trip.emplace_back(i + 1, i, -1.0);
    }
  }
  SparseMatrix r(n, n);
  r.setFromTriplets(trip.begin(), trip.end());
  return r;
}

Eigen::VectorXd structure_eigenvalues(int n) {
  Eigen::VectorXd ev(n);
  for (int i = 0; i < n; ++i) ev[i] = 2.0 - 2.0 * std::cos(i * std::numbers::pi / n);
  return ev;
}

PrecisionOperator::PrecisionOperator(LatticeShape shape, const GMRFHyper& hyper)
    : shape_(shape),
      hyper_(hyper),
      age_eigs_(structure_eigenvalues(shape.n_ages)),
      year_eigs_(structure_eigenvalues(shape.n_years)) {
  hyper.validate();
  const double wa = hyper.tau * hyper.rho_age;
  const double wy = hyper.tau * hyper.rho_year();
  const int na = shape.n_ages;
  const int ny = shape.n_years;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(shape.size()) * 5);
  for (int z = 0; z < na; ++z) {
    for (int t = 0; t < ny; ++t) {
      const Eigen::Index i = shape.index(z, t);
      const double age_deg = (z > 0 ? 1.0 : 0.0) + (z + 1 < na ? 1.0 : 0.0);
      const double year_deg = (t > 0 ? 1.0 : 0.0) + (t + 1 < ny ? 1.0 : 0.0);
      trip.emplace_back(i, i, wa * age_deg + wy * year_deg);
      if (z + 1 < na) {
        trip.emplace_back(i, shape.index(z + 1, t), -wa);
        trip.emplace_back(shape.index(z + 1, t), i, -wa);
      }
      if (t + 1 < ny) {
        trip.emplace_back(i, shape.index(z, t + 1), -wy);
        trip.emplace_back(shape.index(z, t + 1), i, -wy);
      }
    }
  }
  q_.resize(shape.size(), shape.size());
  q_.setFromTriplets(trip.begin(), trip.end());
}

Eigen::VectorXd PrecisionOperator::apply(const Eigen::VectorXd& x) const {
  if (x.size() != shape_.size()) throw ValidationError("precision operator: vector has the wrong size");
  const double wa = hyper_.tau * hyper_.rho_age;
  const double wy = hyper_.tau * hyper_.rho_year();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.size());
  for (int z = 0; z < shape_.n_ages; ++z) {
    for (int t = 0; t < shape_.n_years; ++t) {
      const Eigen::Index i = shape_.index(z, t);
      double age_sum = 0.0, year_sum = 0.0;
      if (z > 0) age_sum += x[i] - x[shape_.index(z - 1, t)];
      if (z + 1 < shape_.n_ages) age_sum += x[i] - x[shape_.index(z + 1, t)];
      if (t > 0) year_sum += x[i] - x[shape_.index(z, t - 1)];
      if (t + 1 < shape_.n_years) year_sum += x[i] - x[shape_.index(z, t + 1)];
      out[i] = wa * age_sum + wy * year_sum;
    }
  }
  return out;
}

PrecisionOperator build_precision(LatticeShape shape, const GMRFHyper& hyper) {
  if (shape.n_ages < 1 || shape.n_years < 1) throw ValidationError("lattice must have at least one age and year");
  return PrecisionOperator(shape, hyper);
}

std::pair<double, double> neighbour_quadratics(const Eigen::VectorXd& d, LatticeShape shape) {
  double s_age = 0.0, s_year = 0.0;
  for (int z = 0; z < shape.n_ages; ++z) {
    for (int t = 0; t < shape.n_years; ++t) {
      const double v = d[shape.index(z, t)];
      if (z + 1 < shape.n_ages) {
        const double diff = d[shape.index(z + 1, t)] - v;
        s_age += diff * diff;
      }
      if (t + 1 < shape.n_years) {
        const double diff = d[shape.index(z, t + 1)] - v;
        s_year += diff * diff;
      }
    }
  }
  return {s_age, s_year};
}

double gen_log_det(const GMRFHyper& hyper, LatticeShape shape) {
  hyper.validate();
  const Eigen::VectorXd la = structure_eigenvalues(shape.n_ages);
  const Eigen::VectorXd ly = structure_eigenvalues(shape.n_years);
  double acc = 0.0;
  for (int i = 0; i < shape.n_ages; ++i) {
    for (int j = 0; j < shape.n_years; ++j) {
      if (i == 0 && j == 0) continue;
      acc += std::log(hyper.rho_age * la[i] + hyper.rho_year() * ly[j]);
    }
  }
  return acc + static_cast<double>(shape.rank()) * std::log(hyper.tau);
}

Eigen::VectorXd prior_mean(double drift, LatticeShape shape, int first_year_index) {
  Eigen::VectorXd mu(shape.size());
  for (int z = 0; z < shape.n_ages; ++z) {
    for (int t = 0; t < shape.n_years; ++t) mu[shape.index(z, t)] = drift * (first_year_index + t);
  }
  return mu;
}

BinomialData BinomialData::from_grid(const MortalityGrid& grid) {
  BinomialData data;
  data.shape = {grid.n_ages(), grid.n_years()};
  data.deaths.resize(data.shape.size());
  data.exposures.resize(data.shape.size());
  for (int z = 0; z < grid.n_ages(); ++z) {
    for (int t = 0; t < grid.n_years(); ++t) {
      data.deaths[data.shape.index(z, t)] = grid.deaths()(z, t);
      data.exposures[data.shape.index(z, t)] = grid.exposures()(z, t);
    }
  }
  return data;
}

double loglik(const Eigen::VectorXd& x, const BinomialData& data) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) acc += data.deaths[i] * x[i] - data.exposures[i] * softplus(x[i]);
  return acc;
}

Eigen::VectorXd grad_loglik(const Eigen::VectorXd& x, const BinomialData& data) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) g[i] = data.deaths[i] - data.exposures[i] * logistic(x[i]);
  return g;
}

LikelihoodFn binomial_likelihood(const BinomialData& data) {
  return [&data](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    grad = grad_loglik(x, data);
    return loglik(x, data);
  };
}

LatentState make_state(Eigen::VectorXd x, const LikelihoodFn& lik) {
  LatentState s;
  s.x = std::move(x);
  s.loglik = lik(s.x, s.grad);
  return s;
}

AuxiliaryGradientSampler::AuxiliaryGradientSampler(const SparseMatrix& precision_pattern)
    : identity_(sparse_identity(precision_pattern.rows())) {
  llt_.analyzePattern(precision_pattern + identity_);
}

AuxiliaryGradientSampler::Step AuxiliaryGradientSampler::step(LatentState& state, const SparseMatrix& q,
                                                              const Eigen::VectorXd& q_mu, double delta,
                                                              const LikelihoodFn& lik, Rng& rng) {
  if (!(delta > 0.0)) throw ValidationError("auxiliary sampler step size must be positive");
  const Eigen::Index n = state.x.size();
  const double half = 0.5 * delta;
  const double inv_half = 1.0 / half;

  Eigen::VectorXd u(n);
  const double sd = std::sqrt(half);
  for (Eigen::Index i = 0; i < n; ++i) u[i] = state.x[i] + half * state.grad[i] + sd * rng.normal();

  llt_.factorize(q + inv_half * identity_);
  if (llt_.info() != Eigen::Success) throw NumericalError("factorization of Q + (2/delta) I failed");
  const Eigen::VectorXd mean = llt_.solve(inv_half * u + q_mu);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
  const Eigen::VectorXd noise = llt_.matrixU().solve(z);
  Eigen::VectorXd proposal = mean + llt_.permutationPinv() * noise;

  Eigen::VectorXd grad_prop;
  const double ll_prop = lik(proposal, grad_prop);
  auto f = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& g) {
    return (u - v - (0.5 * half) * g).dot(g);
  };
  Step result;
  result.log_alpha = ll_prop - state.loglik + f(proposal, grad_prop) - f(state.x, state.grad);
  if (std::isfinite(result.log_alpha) && (result.log_alpha >= 0.0 || std::log(rng.uniform_open()) < result.log_alpha)) {
    state.x = std::move(proposal);
    state.loglik = ll_prop;
    state.grad = std::move(grad_prop);
    result.accepted = true;
  }
  return result;
}

bool aux_sample_step(LatentState& state, const GMRFHyper& hyper, const BinomialData& data, double delta,
                     AuxiliaryGradientSampler& sampler, Rng& rng) {
  const PrecisionOperator q(data.shape, hyper);
  const Eigen::VectorXd q_mu = q.apply(prior_mean(hyper.drift, data.shape));
  return sampler.step(state, q.matrix(), q_mu, delta, binomial_likelihood(data), rng).accepted;
}

double log_rho_conditional(double rho_age, const Eigen::VectorXd& x, const GMRFHyper& hyper, LatticeShape shape) {
  const Eigen::VectorXd d = x - prior_mean(hyper.drift, shape);
  const auto [s_age, s_year] = neighbour_quadratics(d, shape);
  return rho_log_target(rho_age, hyper.tau, s_age, s_year, shape);
}

HyperUpdate update_hyper_gmrf(const Eigen::VectorXd& x, const GMRFHyper& hyper, LatticeShape shape,
                              const GMRFPriors& priors, double rho_step, Rng& rng) {
  hyper.validate();
  HyperUpdate out{hyper, false};
  GMRFHyper& h = out.hyper;
  const double rank = static_cast<double>(shape.rank());

  // tau | x, b, rho
  {
    const auto [s_age, s_year] = neighbour_quadratics(x - prior_mean(h.drift, shape), shape);
    const double quad = h.rho_age * s_age + h.rho_year() * s_year;
    h.tau = samplers::rgamma(priors.tau_shape + 0.5 * rank, priors.tau_rate + 0.5 * quad, rng);
  }

  // b | x, tau, rho
  {
    const PrecisionOperator q(shape, h);
    const Eigen::VectorXd s = prior_mean(1.0, shape);
    const Eigen::VectorXd qs = q.apply(s);
    const double precision = s.dot(qs) + 1.0 / priors.drift_variance;
    const double mean = qs.dot(x) / precision;
    h.drift = mean + rng.normal() / std::sqrt(precision);
  }

  // rho_age | x, tau, b via random walk on logit(rho/2)
  {
    const auto [s_age, s_year] = neighbour_quadratics(x - prior_mean(h.drift, shape), shape);
    const double rho = h.rho_age;
    const double eta = std::log(rho / (2.0 - rho));
    const double eta_new = eta + rho_step * rng.normal();
    const double rho_new = 2.0 * logistic(eta_new);
    if (rho_new > 0.0 && rho_new < 2.0) {
      const double log_alpha =
          rho_log_target(rho_new, h.tau, s_age, s_year, shape) + std::log(rho_new * (2.0 - rho_new)) -
          rho_log_target(rho, h.tau, s_age, s_year, shape) - std::log(rho * (2.0 - rho));
      if (std::log(rng.uniform_open()) < log_alpha) {
        h.rho_age = rho_new;
        out.rho_accepted = true;
      }
    }
  }
  return out;
}

Eigen::VectorXd empirical_logit(const BinomialData& data) {
  Eigen::VectorXd x(data.deaths.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x[i] = std::log((data.deaths[i] + 0.5) / (data.exposures[i] - data.deaths[i] + 0.5));
  }
  return x;
}

GMRFPosterior run_chain_gmrf(const MortalityGrid& grid, const GMRFChainConfig& config) {
  if (config.iterations < 1 || config.burnin < 0 || config.thin < 1 || config.burnin >= config.iterations) {
    throw ValidationError("chain settings need iterations > burnin >= 0 and thin >= 1");
  }
  const BinomialData data = BinomialData::from_grid(grid);
  if (data.shape.n_years < 2 || data.shape.n_ages < 2) {
    throw ValidationError("the GMRF model needs at least two ages and two years");
  }
  const LikelihoodFn lik = binomial_likelihood(data);
  LatentState state = make_state(empirical_logit(data), lik);
  GMRFHyper hyper;

  double delta0 = config.initial_delta;
  if (!(delta0 > 0.0)) {
    double curvature = 0.0;
    for (Eigen::Index i = 0; i < state.x.size(); ++i) {
      const double p = logistic(state.x[i]);
      curvature = std::max(curvature, data.exposures[i] * p * (1.0 - p));
    }
    delta0 = curvature > 0.0 ? 1.0 / curvature : 1.0;
  }

  GMRFPosterior post;
  post.first_age = grid.first_age();
  post.first_year = grid.first_year();
  post.shape = data.shape;
  post.seed = config.seed;

  Rng rng(config.seed);
  AuxiliaryGradientSampler sampler(PrecisionOperator(data.shape, hyper).matrix());
  samplers::AdaptiveScale delta(delta0, config.target_acceptance, config.burnin);
  samplers::AdaptiveScale rho_step(config.initial_rho_step, config.rho_target_acceptance, config.burnin);
  for (long it = 1; it <= config.iterations; ++it) {
    const HyperUpdate hu = update_hyper_gmrf(state.x, hyper, data.shape, config.priors, rho_step.scale(), rng);
    hyper = hu.hyper;
    rho_step.record(hu.rho_accepted, it);

    const PrecisionOperator q(data.shape, hyper);
    const Eigen::VectorXd q_mu = q.apply(prior_mean(hyper.drift, data.shape));
    const auto step = sampler.step(state, q.matrix(), q_mu, delta.scale(), lik, rng);
    delta.record(step.accepted, it);

    if (it > config.burnin && (it - config.burnin) % config.thin == 0) {
      post.draws.push_back(GMRFDraw{it, state.x, hyper});
    }
  }
  post.acceptance = delta.acceptance_rate();
  post.rho_acceptance = rho_step.acceptance_rate();
  post.delta = delta.scale();
  post.rho_step = rho_step.scale();
  return post;
}

FutureConditional::FutureConditional(LatticeShape observed, int horizon, const GMRFHyper& hyper)
    : observed_(observed), horizon_(horizon), hyper_(hyper) {
  if (horizon < 1) throw ValidationError("forecast horizon must be at least 1");
  const LatticeShape joint{observed.n_ages, observed.n_years + horizon};
  const PrecisionOperator q(joint, hyper);
  std::vector<Eigen::Index> fut, obs;
  for (int z = 0; z < joint.n_ages; ++z) {
    for (int t = 0; t < joint.n_years; ++t) (t < observed.n_years ? obs : fut).push_back(joint.index(z, t));
  }
  const SparseMatrix sf = selection(fut, joint.size());
  const SparseMatrix so = selection(obs, joint.size());
  q_ff_ = sf * q.matrix() * SparseMatrix(sf.transpose());
  q_fo_ = sf * q.matrix() * SparseMatrix(so.transpose());
  llt_.compute(q_ff_);
  if (llt_.info() != Eigen::Success) throw NumericalError("future-block precision is not positive definite");
}

Eigen::VectorXd FutureConditional::mean(const Eigen::VectorXd& x_observed) const {
  if (x_observed.size() != observed_.size()) throw ValidationError("observed surface has the wrong size");
  const Eigen::VectorXd mu_o = prior_mean(hyper_.drift, observed_);
  const Eigen::VectorXd mu_f = prior_mean(hyper_.drift, {observed_.n_ages, horizon_}, observed_.n_years + 1);
  return mu_f - llt_.solve(q_fo_ * (x_observed - mu_o));
}

Eigen::MatrixXd FutureConditional::covariance() const {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(q_ff_.rows(), q_ff_.cols());
  return llt_.solve(id);
}

Eigen::VectorXd FutureConditional::sample(const Eigen::VectorXd& x_observed, Rng& rng) const {
  Eigen::VectorXd z(q_ff_.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  const Eigen::VectorXd noise = llt_.matrixU().solve(z);
  return mean(x_observed) + llt_.permutationPinv() * noise;
}

ForecastSet predict_gmrf(const GMRFPosterior& posterior, int horizon, Rng& rng) {
  if (horizon < 1) throw ValidationError("forecast horizon must be at least 1");
  if (posterior.draws.empty()) throw ValidationError("no posterior draws to forecast from");
  ForecastSet fs;
  fs.model = ModelTag::gmrf;
  fs.first_age = posterior.first_age;
  fs.origin_year = posterior.last_year();
  fs.seed = posterior.seed;
  const int na = posterior.shape.n_ages;
  const auto m_count = static_cast<Eigen::Index>(posterior.draws.size());
  fs.samples.assign(static_cast<std::size_t>(horizon), Eigen::MatrixXd(na, m_count));
  for (Eigen::Index m = 0; m < m_count; ++m) {
    const GMRFDraw& d = posterior.draws[static_cast<std::size_t>(m)];
    const FutureConditional fc(posterior.shape, horizon, d.hyper);
    const Eigen::VectorXd xs = fc.sample(d.x, rng);
    for (int z = 0; z < na; ++z) {
      for (int h = 0; h < horizon; ++h) {
        fs.samples[static_cast<std::size_t>(h)](z, m) = logistic(xs[static_cast<Eigen::Index>(z) * horizon + h]);
      }
    }
  }
  return fs;
}

}  // namespace mortfc::gmrf
