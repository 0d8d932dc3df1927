#include "mortfc/hpdyn.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "mortfc/errors.hpp"
#include "mortfc/samplers.hpp"

namespace mortfc::hp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_mv_gamma(double a, int p) {
  double acc = 0.25 * p * (p - 1) * std::log(std::numbers::pi);
  for (int j = 0; j < p; ++j) acc += std::lgamma(a - 0.5 * j);
  return acc;
}

// Draw Sigma from an inverse Wishart, resampling once and then jittering if
// the draw is numerically not SPD.
HPMatrix draw_innovation(double df, const HPMatrix& scale, Rng& rng) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    HPMatrix s = samplers::rinvwishart(df, scale, rng);
    if (s.allFinite() && Eigen::LLT<HPMatrix>(s).info() == Eigen::Success) return s;
  }
  return repair_spd(samplers::rinvwishart(df, scale, rng));
}

}  // namespace

GaussianKernel::GaussianKernel(const HPMatrix& cov) {
  Eigen::LLT<HPMatrix> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("innovation covariance is not SPD");
  chol_ = llt.matrixL();
  precision_ = llt.solve(HPMatrix::Identity());
  log_det_ = 2.0 * chol_.diagonal().array().log().sum();
}

double GaussianKernel::log_pdf(const HPVector& x, const HPVector& mean) const {
  const HPVector z = chol_.triangularView<Eigen::Lower>().solve(x - mean);
  return -0.5 * (kDim * std::log(2.0 * std::numbers::pi) + log_det_ + z.squaredNorm());
}

BoxProbability::BoxProbability(const TruncationBox& box, int draws, std::uint64_t seed) : box_(box) {
  Rng rng(seed, 0x7275636eULL);
  normals_.resize(kDim, std::max(draws, 1));
  for (Eigen::Index j = 0; j < normals_.cols(); ++j) {
    for (int i = 0; i < kDim; ++i) normals_(i, j) = rng.normal();
  }
}

double BoxProbability::operator()(const HPVector& mean, const HPMatrix& chol_lower) const {
  long inside = 0;
  for (Eigen::Index j = 0; j < normals_.cols(); ++j) {
    const HPVector x = mean + chol_lower.triangularView<Eigen::Lower>() * normals_.col(j);
    bool ok = true;
    for (int i = 0; i < kDim && ok; ++i) {
      if (std::isfinite(box_.lower[i]) && x[i] < box_.lower[i]) ok = false;
      if (std::isfinite(box_.upper[i]) && x[i] > box_.upper[i]) ok = false;
    }
    if (ok) ++inside;
  }
  return std::max(static_cast<double>(inside), 0.5) / static_cast<double>(normals_.cols());
}

DynamicHPModel::DynamicHPModel(const MortalityGrid& grid, TruncationBox box, HyperPriorConstants prior,
                               bool truncation_correction, int truncation_draws, std::uint64_t seed)
    : deaths_(grid.deaths()),
      exposures_(grid.exposures()),
      first_age_(grid.first_age()),
      box_(std::move(box)),
      prior_(prior),
      correction_(truncation_correction),
      box_prob_(box_, truncation_correction ? truncation_draws : 1, seed) {
  for (int i = 0; i < kDim; ++i) {
    if (!(box_.lower[i] < box_.upper[i])) throw ValidationError("truncation box must satisfy lower < upper");
  }
}

double DynamicHPModel::year_loglik(int t, const HPVector& psi) const {
  return hp::year_loglik(psi, deaths_.col(t), exposures_.col(t), first_age_);
}

double DynamicHPModel::box_probability(const HPVector& mean, const HPMatrix& chol_lower) const {
  return correction_ ? box_prob_(mean, chol_lower) : 1.0;
}

double DynamicHPModel::log_hyperprior(const RWHyper& hyper) const {
  double lp = 0.0;
  const double m = prior_.drift_precision;
  lp += kDim * 0.5 * std::log(m / (2.0 * std::numbers::pi)) - 0.5 * m * hyper.drift.squaredNorm();

  for (int i = 0; i < kDim; ++i) {
    if (!(hyper.aux[i] > 0.0)) return kNegInf;
  }
  Eigen::LLT<HPMatrix> llt(hyper.innovation);
  if (llt.info() != Eigen::Success) return kNegInf;
  const double df = prior_.nu + kDim - 1.0;
  const HPVector psi_diag = (2.0 * prior_.nu) * hyper.aux.cwiseInverse();
  const double log_det_scale = psi_diag.array().log().sum();
  const double log_det_sigma = 2.0 * HPMatrix(llt.matrixL()).diagonal().array().log().sum();
  const HPMatrix sigma_inv = llt.solve(HPMatrix::Identity());
  const double trace = psi_diag.dot(sigma_inv.diagonal());
  lp += 0.5 * df * log_det_scale - 0.5 * df * kDim * std::log(2.0) - log_mv_gamma(0.5 * df, kDim) -
        0.5 * (df + kDim + 1.0) * log_det_sigma - 0.5 * trace;

  const double a = 0.5;
  const double b = 1.0 / (prior_.scale * prior_.scale);
  for (int i = 0; i < kDim; ++i) {
    lp += a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(hyper.aux[i]) - b / hyper.aux[i];
  }
  return lp;
}

double DynamicHPModel::log_transition(const HPVector& next, const HPVector& prev, const RWHyper& hyper,
                                      const GaussianKernel& kernel) const {
  const HPVector mean = prev + hyper.drift;
  double lp = kernel.log_pdf(next, mean);
  if (correction_) lp -= std::log(box_prob_(mean, kernel.chol()));
  return lp;
}

double DynamicHPModel::log_posterior(const HPPath& path, const RWHyper& hyper) const {
  if (static_cast<int>(path.size()) != n_years()) throw ValidationError("path length differs from grid years");
  for (const auto& psi : path) {
    if (!box_.contains(psi)) return kNegInf;
  }
  const double prior = log_hyperprior(hyper);
  if (!std::isfinite(prior)) return kNegInf;
  double lp = prior;
  for (int t = 0; t < n_years(); ++t) lp += year_loglik(t, path[static_cast<std::size_t>(t)]);
  if (path.size() > 1) {
    const GaussianKernel kernel(hyper.innovation);
    for (std::size_t t = 1; t < path.size(); ++t) lp += log_transition(path[t], path[t - 1], hyper, kernel);
  }
  return lp;
}

double DynamicHPModel::log_state_conditional(int t, const HPVector& psi_t, const HPPath& path, const RWHyper& hyper,
                                             const GaussianKernel& kernel) const {
  if (!box_.contains(psi_t)) return kNegInf;
  double lp = year_loglik(t, psi_t);
  const auto ut = static_cast<std::size_t>(t);
  // The normalizer of the incoming transition does not depend on psi_t.
  if (t > 0) lp += kernel.log_pdf(psi_t, path[ut - 1] + hyper.drift);
  if (ut + 1 < path.size()) lp += log_transition(path[ut + 1], psi_t, hyper, kernel);
  return lp;
}

bool DynamicHPModel::update_state_block(int t, HPPath& path, const RWHyper& hyper, const GaussianKernel& kernel,
                                        const HPProposalPlan& plan, ProposalKind kind, Rng& rng) const {
  const auto ut = static_cast<std::size_t>(t);
  std::array<int, kDim> idx{};
  int nfree = 0;
  for (int i = 0; i < kDim; ++i) {
    if (plan.free[static_cast<std::size_t>(i)]) idx[static_cast<std::size_t>(nfree++)] = i;
  }
  if (nfree == 0) return true;

  const double c = plan.scales[ut];
  Eigen::MatrixXd cov(nfree, nfree);
  for (int a = 0; a < nfree; ++a) {
    for (int b = 0; b < nfree; ++b) cov(a, b) = c * plan.covs[ut](idx[a], idx[b]);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("proposal covariance is not SPD");
  const Eigen::MatrixXd chol = llt.matrixL();

  const HPVector& current = path[ut];
  const HPVector center = kind == ProposalKind::independence ? plan.means[ut] : current;
  Eigen::VectorXd eps(nfree);
  for (int a = 0; a < nfree; ++a) eps[a] = rng.normal();
  const Eigen::VectorXd move = chol * eps;
  HPVector proposal = current;
  for (int a = 0; a < nfree; ++a) proposal[idx[a]] = center[idx[a]] + move[a];

  double log_ratio = log_state_conditional(t, proposal, path, hyper, kernel);
  if (!std::isfinite(log_ratio)) return false;
  log_ratio -= log_state_conditional(t, current, path, hyper, kernel);
  if (kind == ProposalKind::independence) {
    // q(current) / q(proposal) for q = N(m_t, c V_t) on the free coordinates.
    auto log_q = [&](const HPVector& x) {
      Eigen::VectorXd d(nfree);
      for (int a = 0; a < nfree; ++a) d[a] = x[idx[a]] - plan.means[ut][idx[a]];
      return -0.5 * llt.matrixL().solve(d).squaredNorm();
    };
    log_ratio += log_q(current) - log_q(proposal);
  }
  if (std::log(rng.uniform_open()) < log_ratio) {
    path[ut] = proposal;
    return true;
  }
  return false;
}

RWHyper DynamicHPModel::update_hypers(const HPPath& path, const RWHyper& hyper, Rng& rng) const {
  if (path.size() < 2) throw ValidationError("hyperparameter updates need at least two years");
  const auto n = static_cast<double>(path.size() - 1);
  RWHyper out = hyper;

  auto log_z_sum = [&](const HPVector& drift, const HPMatrix& chol) {
    double acc = 0.0;
    for (std::size_t t = 1; t < path.size(); ++t) acc += std::log(box_prob_(path[t - 1] + drift, chol));
    return acc;
  };

  // Drift: Gaussian with precision M + n Sigma^{-1}.
  {
    const GaussianKernel kernel(out.innovation);
    HPVector inc_sum = HPVector::Zero();
    for (std::size_t t = 1; t < path.size(); ++t) inc_sum += path[t] - path[t - 1];
    const HPMatrix precision = prior_.drift_precision * HPMatrix::Identity() + n * kernel.precision();
    Eigen::LLT<HPMatrix> llt(precision);
    const HPVector mean = llt.solve(kernel.precision() * inc_sum);
    HPVector eps;
    for (int i = 0; i < kDim; ++i) eps[i] = rng.normal();
    const HPVector draw = mean + HPMatrix(llt.matrixU()).triangularView<Eigen::Upper>().solve(eps);
    if (correction_) {
      const double log_acc = log_z_sum(out.drift, kernel.chol()) - log_z_sum(draw, kernel.chol());
      if (std::log(rng.uniform_open()) < log_acc) out.drift = draw;
    } else {
      out.drift = draw;
    }
  }

  // Innovation covariance: inverse Wishart.
  {
    HPMatrix scale = (2.0 * prior_.nu) * out.aux.cwiseInverse().asDiagonal().toDenseMatrix();
    for (std::size_t t = 1; t < path.size(); ++t) {
      const HPVector r = path[t] - path[t - 1] - out.drift;
      scale += r * r.transpose();
    }
    const double df = prior_.nu + kDim - 1.0 + n;
    const HPMatrix draw = draw_innovation(df, scale, rng);
    if (correction_) {
      const HPMatrix old_chol = GaussianKernel(out.innovation).chol();
      const HPMatrix new_chol = GaussianKernel(draw).chol();
      const double log_acc = log_z_sum(out.drift, old_chol) - log_z_sum(out.drift, new_chol);
      if (std::log(rng.uniform_open()) < log_acc) out.innovation = draw;
    } else {
      out.innovation = draw;
    }
  }

  // Huang-Wand auxiliaries: inverse gamma.
  {
    const HPMatrix sigma_inv = GaussianKernel(out.innovation).precision();
    const double shape = 0.5 * (prior_.nu + kDim);
    const double b = 1.0 / (prior_.scale * prior_.scale);
    for (int i = 0; i < kDim; ++i) out.aux[i] = samplers::rinvgamma(shape, prior_.nu * sigma_inv(i, i) + b, rng);
  }
  return out;
}

HPProposalPlan build_proposal_plan(const MortalityGrid& grid, const TruncationBox& box, double initial_scale,
                                   std::vector<int>* borrowed) {
  const int years = grid.n_years();
  const Eigen::MatrixXd rates = grid.empirical_rates();
  std::vector<std::optional<WlsResult>> fits(static_cast<std::size_t>(years));
  std::optional<HPVector> start;
  for (int t = 0; t < years; ++t) {
    try {
      WlsResult r = wls_fit(rates.col(t), grid.exposures().col(t), grid.first_age(), box, start);
      if (r.mean.allFinite() && r.cov.allFinite()) {
        start = r.mean;
        fits[static_cast<std::size_t>(t)] = std::move(r);
      }
    } catch (const NumericalError&) {
    }
  }
  HPProposalPlan plan;
  for (int t = 0; t < years; ++t) {
    int src = -1;
    for (int d = 0; d < years && src < 0; ++d) {
      if (t - d >= 0 && fits[static_cast<std::size_t>(t - d)]) src = t - d;
      else if (t + d < years && fits[static_cast<std::size_t>(t + d)]) src = t + d;
    }
    if (src < 0) throw ValidationError("WLS seeding failed for every year of the training window");
    if (src != t && borrowed) borrowed->push_back(grid.first_year() + t);
    plan.means.push_back(fits[static_cast<std::size_t>(src)]->mean);
    plan.covs.push_back(fits[static_cast<std::size_t>(src)]->cov);
    plan.scales.push_back(initial_scale);
  }
  return plan;
}

HPPosterior run_chain(const MortalityGrid& grid, const HPChainConfig& config) {
  if (config.iterations < 1 || config.burnin < 0 || config.thin < 1 || config.burnin >= config.iterations) {
    throw ValidationError("chain settings need iterations > burnin >= 0 and thin >= 1");
  }
  const DynamicHPModel model(grid, config.box, {}, config.truncation_correction, config.truncation_draws,
                             config.seed);
  HPPosterior post;
  post.first_age = grid.first_age();
  post.n_ages = grid.n_ages();
  post.first_year = grid.first_year();
  post.n_years = grid.n_years();
  post.seed = config.seed;
  post.box = config.box;

  HPProposalPlan plan = build_proposal_plan(grid, config.box, config.initial_scale, &post.borrowed_seeds);
  plan.free = config.free;
  HPPath path;
  for (const auto& m : plan.means) path.push_back(config.box.clamp(m));
  if (config.style == ProposalStyle::isotropic) {
    for (auto& v : plan.covs) v = HPMatrix::Identity();
  }

  const int years = grid.n_years();
  RWHyper hyper;
  hyper.innovation = 0.01 * HPMatrix::Identity();
  if (years > 1) hyper.drift = (path.back() - path.front()) / static_cast<double>(years - 1);

  std::vector<samplers::AdaptiveScale> scales;
  for (int t = 0; t < years; ++t) scales.emplace_back(plan.scales[static_cast<std::size_t>(t)],
                                                      config.target_acceptance, config.burnin);

  Rng rng(config.seed);
  GaussianKernel kernel(hyper.innovation);
  long hyper_moves = 0, hyper_steps = 0;
  for (long it = 1; it <= config.iterations; ++it) {
    const ProposalKind kind = (it == 1 && config.style == ProposalStyle::wls_informed) ? ProposalKind::independence
                                                                                       : ProposalKind::random_walk;
    for (int t = 0; t < years; ++t) {
      plan.scales[static_cast<std::size_t>(t)] = scales[static_cast<std::size_t>(t)].scale();
      const bool acc = model.update_state_block(t, path, hyper, kernel, plan, kind, rng);
      scales[static_cast<std::size_t>(t)].record(acc, it);
    }
    if (years > 1) {
      const RWHyper next = model.update_hypers(path, hyper, rng);
      ++hyper_steps;
      if (next.drift != hyper.drift || next.innovation != hyper.innovation) ++hyper_moves;
      hyper = next;
      kernel = GaussianKernel(hyper.innovation);
    }
    if (it > config.burnin && (it - config.burnin) % config.thin == 0) {
      post.draws.push_back(HPDraw{it, path, hyper});
    }
  }
  for (const auto& s : scales) {
    post.acceptance.push_back(s.acceptance_rate());
    post.scales.push_back(s.scale());
  }
  post.hyper_acceptance = hyper_steps > 0 ? static_cast<double>(hyper_moves) / hyper_steps : 1.0;
  return post;
}

std::vector<HPPath> simulate_forward_states(const HPPosterior& posterior, int horizon, Rng& rng, int gibbs_sweeps) {
  if (horizon < 1) throw ValidationError("forecast horizon must be at least 1");
  std::vector<HPPath> out;
  out.reserve(posterior.draws.size());
  const Eigen::VectorXd lo = posterior.box.lower;
  const Eigen::VectorXd hi = posterior.box.upper;
  for (const auto& draw : posterior.draws) {
    HPPath future;
    HPVector prev = draw.path.back();
    for (int h = 0; h < horizon; ++h) {
      const Eigen::VectorXd mean = prev + draw.hyper.drift;
      const Eigen::VectorXd next =
          samplers::rtmvnorm_gibbs(mean, Eigen::MatrixXd(draw.hyper.innovation), lo, hi, gibbs_sweeps, rng);
      prev = next;
      future.push_back(prev);
    }
    out.push_back(std::move(future));
  }
  return out;
}

ForecastSet predict_forward(const HPPosterior& posterior, int horizon, Rng& rng, int gibbs_sweeps) {
  if (posterior.draws.empty()) throw ValidationError("no posterior draws to forecast from");
  const auto states = simulate_forward_states(posterior, horizon, rng, gibbs_sweeps);
  ForecastSet fs;
  fs.model = ModelTag::hp;
  fs.first_age = posterior.first_age;
  fs.origin_year = posterior.last_year();
  fs.seed = posterior.seed;
  const auto m_count = static_cast<Eigen::Index>(states.size());
  fs.samples.assign(static_cast<std::size_t>(horizon), Eigen::MatrixXd(posterior.n_ages, m_count));
  for (Eigen::Index m = 0; m < m_count; ++m) {
    for (int h = 0; h < horizon; ++h) {
      const HPNatural p = inverse_transform(states[static_cast<std::size_t>(m)][static_cast<std::size_t>(h)]);
      for (int z = 0; z < posterior.n_ages; ++z) {
        fs.samples[static_cast<std::size_t>(h)](z, m) = hp_prob(posterior.first_age + z, p);
      }
    }
  }
  return fs;
}

}  // namespace mortfc::hp
