#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <vector>

#include "mortfc/errors.hpp"
#include "mortfc/gmrf.hpp"
#include "testkit.hpp"

using namespace mortfc;
using namespace mortfc::gmrf;

namespace {

Eigen::MatrixXd dense_r(int n) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) {
    r(i, i) += 1;
    r(i + 1, i + 1) += 1;
    r(i, i + 1) -= 1;
    r(i + 1, i) -= 1;
  }
  return r;
}

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd k(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  }
  return k;
}

Eigen::MatrixXd dense_q(LatticeShape s, const GMRFHyper& h) {
  const Eigen::MatrixXd ia = Eigen::MatrixXd::Identity(s.n_ages, s.n_ages);
  const Eigen::MatrixXd it = Eigen::MatrixXd::Identity(s.n_years, s.n_years);
  return h.tau * (h.rho_age * kron(dense_r(s.n_ages), it) + h.rho_year() * kron(ia, dense_r(s.n_years)));
}

Eigen::VectorXd sorted_eigenvalues(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvalues();
}

GMRFHyper random_hyper(Rng& rng) { return {0.1 + 20 * rng.uniform(), 0.05 + 1.9 * rng.uniform(), rng.normal() * 0.05}; }

BinomialData make_binomial_data(LatticeShape s, Rng& rng) {
  BinomialData d;
  d.shape = s;
  d.deaths.resize(s.size());
  d.exposures.resize(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    d.exposures[i] = 100 + 1e4 * rng.uniform();
    d.deaths[i] = std::round(d.exposures[i] * 0.05 * rng.uniform());
  }
  return d;
}

}  // namespace

TEST_CASE("structure matrix and its eigenvalues") {
  for (int n : {1, 2, 3, 7, 12}) {
    CHECK(testkit::dense(structure_matrix(n)) == dense_r(n));
    const Eigen::VectorXd ev = structure_eigenvalues(n);
    const Eigen::VectorXd oracle = sorted_eigenvalues(dense_r(n));
    Eigen::VectorXd mine = ev;
    std::sort(mine.data(), mine.data() + mine.size());
    CHECK((mine - oracle).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("precision matches the Kronecker form and annihilates constants exactly") {
  Rng rng(1);
  for (LatticeShape s : {LatticeShape{6, 5}, LatticeShape{10, 8}, LatticeShape{3, 1}, LatticeShape{1, 4}}) {
    for (int rep = 0; rep < 5; ++rep) {
      const GMRFHyper h = random_hyper(rng);
      const PrecisionOperator q(s, h);
      CHECK((testkit::dense(q.matrix()) - dense_q(s, h)).cwiseAbs().maxCoeff() < 1e-12);
      const Eigen::VectorXd ones = Eigen::VectorXd::Ones(s.size());
      const Eigen::VectorXd q1 = q.apply(ones);
      for (Eigen::Index i = 0; i < q1.size(); ++i) REQUIRE(q1[i] == 0.0);
      Eigen::VectorXd x(s.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.normal();
      CHECK((q.apply(x) - q.matrix() * x).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("rank deficiency is exactly one") {
  for (LatticeShape s : {LatticeShape{6, 5}, LatticeShape{10, 8}}) {
    const Eigen::VectorXd ev = sorted_eigenvalues(dense_q(s, {1.7, 0.6, 0.0}));
    CHECK(std::abs(ev[0]) < 1e-10);
    CHECK(ev[1] > 1e-6);
    const Eigen::VectorXd ev2 = sorted_eigenvalues(testkit::dense(PrecisionOperator(s, {1.7, 0.6, 0.0}).matrix()));
    CHECK(std::abs(ev2[0]) < 1e-10);
    CHECK(ev2[1] > 1e-6);
  }
}

TEST_CASE("generalized log-determinant matches the dense spectrum") {
  Rng rng(2);
  for (LatticeShape s : {LatticeShape{6, 5}, LatticeShape{10, 8}, LatticeShape{4, 3}}) {
    for (int rep = 0; rep < 5; ++rep) {
      const GMRFHyper h = random_hyper(rng);
      const Eigen::VectorXd ev = sorted_eigenvalues(dense_q(s, h));
      double oracle = 0.0;
      for (Eigen::Index i = 1; i < ev.size(); ++i) oracle += std::log(ev[i]);
      CHECK(std::abs(gen_log_det(h, s) - oracle) < 1e-8);
    }
  }
}

TEST_CASE("interior full conditional follows the four-neighbour stencil") {
  Rng rng(3);
  const LatticeShape s{7, 6};
  for (int rep = 0; rep < 10; ++rep) {
    const GMRFHyper h = random_hyper(rng);
    const Eigen::MatrixXd q = testkit::dense(PrecisionOperator(s, h).matrix());
    Eigen::VectorXd x(s.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.normal();
    for (int z = 1; z + 1 < s.n_ages; ++z) {
      for (int t = 1; t + 1 < s.n_years; ++t) {
        const Eigen::Index i = s.index(z, t);
        // Conditional of a Gaussian with precision Q and zero mean.
        const double var = 1.0 / q(i, i);
        const double mean = -(q.row(i).dot(x) - q(i, i) * x[i]) * var;
        const double stencil = 0.25 * (h.rho_age * (x[s.index(z - 1, t)] + x[s.index(z + 1, t)]) +
                                       h.rho_year() * (x[s.index(z, t - 1)] + x[s.index(z, t + 1)]));
        CHECK(mean == doctest::Approx(stencil).epsilon(1e-12));
        CHECK(var == doctest::Approx(1.0 / (4.0 * h.tau)).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("neighbour quadratics equal the Kronecker quadratic forms") {
  Rng rng(4);
  const LatticeShape s{5, 4};
  Eigen::VectorXd d(s.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = rng.normal();
  const auto [sa, sy] = neighbour_quadratics(d, s);
  const Eigen::MatrixXd ra = kron(dense_r(5), Eigen::MatrixXd::Identity(4, 4));
  const Eigen::MatrixXd ry = kron(Eigen::MatrixXd::Identity(5, 5), dense_r(4));
  CHECK(sa == doctest::Approx(d.dot(ra * d)).epsilon(1e-13));
  CHECK(sy == doctest::Approx(d.dot(ry * d)).epsilon(1e-13));
}

TEST_CASE("prior mean is t times the drift") {
  const Eigen::VectorXd mu = prior_mean(0.5, {2, 3}, 4);
  CHECK(mu[LatticeShape{2, 3}.index(1, 0)] == 2.0);
  CHECK(mu[LatticeShape{2, 3}.index(0, 2)] == 3.0);
}

TEST_CASE("binomial gradient matches central differences") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const LatticeShape s{20, 10};
    const BinomialData data = make_binomial_data(s, rng);
    Eigen::VectorXd x = empirical_logit(data);
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += 0.5 * rng.normal();
    const Eigen::VectorXd g = grad_loglik(x, data);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      auto f = [&](double v) {
        Eigen::VectorXd y = x;
        y[i] = v;
        return loglik(y, data);
      };
      const double h = 1e-4;
      const double d1 = (f(x[i] + h) - f(x[i] - h)) / (2 * h);
      const double d2 = (f(x[i] + h / 2) - f(x[i] - h / 2)) / h;
      const double fd = (4 * d2 - d1) / 3;
      worst = std::max(worst, std::abs(fd - g[i]) / std::max(std::abs(g[i]), 1.0));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("likelihood is stable for extreme logits") {
  BinomialData d;
  d.shape = {1, 2};
  d.deaths = Eigen::Vector2d(0.0, 10.0);
  d.exposures = Eigen::Vector2d(1e5, 10.0);
  const Eigen::Vector2d x(-800.0, 800.0);
  CHECK(std::isfinite(loglik(x, d)));
  CHECK(std::isfinite(grad_loglik(x, d).norm()));
}

TEST_CASE("flat likelihood gives acceptance probability one") {
  Rng rng(5);
  const LatticeShape s{4, 3};
  const PrecisionOperator q(s, {2.0, 0.8, 0.01});
  const Eigen::VectorXd q_mu = q.apply(prior_mean(0.01, s));
  const LikelihoodFn flat = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = Eigen::VectorXd::Zero(x.size());
    return 0.0;
  };
  LatentState state = make_state(Eigen::VectorXd::Zero(s.size()), flat);
  AuxiliaryGradientSampler sampler(q.matrix());
  for (int i = 0; i < 200; ++i) {
    const auto step = sampler.step(state, q.matrix(), q_mu, 0.3 + rng.uniform(), flat, rng);
    CHECK(std::abs(step.log_alpha) < 1e-12);
    CHECK(step.accepted);
  }
}

TEST_CASE("auxiliary sampler matches quadrature in one dimension") {
  // One latent logit with a Gaussian prior N(-3, 1/2) and binomial data.
  Rng rng(6);
  SparseMatrix q(1, 1);
  q.insert(0, 0) = 2.0;
  const double mu = -3.0;
  Eigen::VectorXd q_mu(1);
  q_mu[0] = 2.0 * mu;
  BinomialData data;
  data.shape = {1, 1};
  data.deaths = Eigen::VectorXd::Constant(1, 7.0);
  data.exposures = Eigen::VectorXd::Constant(1, 150.0);
  const LikelihoodFn lik = binomial_likelihood(data);
  auto log_target = [&](double x) {
    return -0.5 * 2.0 * (x - mu) * (x - mu) + 7.0 * x - 150.0 * std::log1p(std::exp(x));
  };
  const testkit::QuadratureCdf cdf(log_target, -10.0, 4.0);

  LatentState state = make_state(Eigen::VectorXd::Constant(1, -2.0), lik);
  AuxiliaryGradientSampler sampler(q);
  std::vector<double> draws;
  long accepted = 0;
  for (int it = 0; it < 200000; ++it) {
    accepted += sampler.step(state, q, q_mu, 0.1, lik, rng).accepted;
    if (it % 10 == 9) draws.push_back(state.x[0]);
  }
  CHECK(testkit::ks_distance(draws, cdf) < 0.05);
  CHECK(accepted > 0);

  // Same reduction through the lattice entry point: a 1x1 lattice has a flat prior.
  const GMRFHyper h{1.0, 1.0, 0.0};
  LatentState s2 = make_state(Eigen::VectorXd::Constant(1, -3.0), lik);
  AuxiliaryGradientSampler sampler2(PrecisionOperator({1, 1}, h).matrix());
  const testkit::QuadratureCdf flat_cdf(
      [](double x) { return 7.0 * x - 150.0 * std::log1p(std::exp(x)); }, -10.0, 2.0);
  std::vector<double> flat_draws;
  for (int it = 0; it < 200000; ++it) {
    aux_sample_step(s2, h, data, 0.1, sampler2, rng);
    if (it % 10 == 9) flat_draws.push_back(s2.x[0]);
  }
  CHECK(testkit::ks_distance(flat_draws, flat_cdf) < 0.05);
}

TEST_CASE("tau and drift updates draw from their conditionals") {
  Rng rng(7);
  const LatticeShape s{6, 5};
  Eigen::VectorXd x(s.size());
  for (int z = 0; z < s.n_ages; ++z) {
    for (int t = 0; t < s.n_years; ++t) x[s.index(z, t)] = -5 + 0.1 * z - 0.02 * t + 0.05 * rng.normal();
  }
  const GMRFHyper h{3.0, 0.7, -0.02};
  const GMRFPriors priors;
  const auto [sa, sy] = neighbour_quadratics(x - prior_mean(h.drift, s), s);
  const double shape = priors.tau_shape + 0.5 * static_cast<double>(s.rank());
  const double rate = priors.tau_rate + 0.5 * (h.rho_age * sa + h.rho_year() * sy);

  const int n = 40000;
  double tau_sum = 0.0, z_sum = 0.0, z_sq = 0.0;
  const Eigen::VectorXd ones_t = prior_mean(1.0, s);
  for (int i = 0; i < n; ++i) {
    const HyperUpdate u = update_hyper_gmrf(x, h, s, priors, 0.3, rng);
    tau_sum += u.hyper.tau;
    // Drift conditional given the freshly drawn tau, from the dense precision.
    const Eigen::MatrixXd qd = dense_q(s, {u.hyper.tau, h.rho_age, 0.0});
    const double prec = ones_t.dot(qd * ones_t) + 1.0 / priors.drift_variance;
    const double mean = ones_t.dot(qd * x) / prec;
    const double zscore = (u.hyper.drift - mean) * std::sqrt(prec);
    z_sum += zscore;
    z_sq += zscore * zscore;
  }
  const double tau_mean = shape / rate;
  const double tau_se = std::sqrt(shape) / rate / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(tau_sum / n - tau_mean) < 3 * tau_se);
  CHECK(std::abs(z_sum / n) < 3.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(z_sq / n - 1.0) < 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("rho conditional matches the dense Gaussian log density") {
  Rng rng(8);
  const LatticeShape s{5, 4};
  Eigen::VectorXd x(s.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.normal();
  const GMRFHyper h{2.5, 1.0, 0.1};
  auto dense_log = [&](double rho) {
    const GMRFHyper g{h.tau, rho, h.drift};
    const Eigen::MatrixXd q = dense_q(s, g);
    const Eigen::VectorXd ev = sorted_eigenvalues(q);
    double ld = 0.0;
    for (Eigen::Index i = 1; i < ev.size(); ++i) ld += std::log(ev[i]);
    const Eigen::VectorXd d = x - prior_mean(h.drift, s);
    return 0.5 * ld - 0.5 * d.dot(q * d);
  };
  for (double r1 : {0.2, 0.9, 1.7}) {
    const double mine = log_rho_conditional(r1, x, h, s) - log_rho_conditional(1.0, x, h, s);
    CHECK(mine == doctest::Approx(dense_log(r1) - dense_log(1.0)).epsilon(1e-10));
  }
}

TEST_CASE("future conditional matches dense conditioning") {
  Rng rng(9);
  const LatticeShape obs{4, 3};
  const int k = 2;
  for (int rep = 0; rep < 5; ++rep) {
    const GMRFHyper h = random_hyper(rng);
    const LatticeShape joint{4, 3 + k};
    const Eigen::MatrixXd q = dense_q(joint, h);
    std::vector<Eigen::Index> oi, fi;
    for (int z = 0; z < 4; ++z) {
      for (int t = 0; t < 3 + k; ++t) (t < 3 ? oi : fi).push_back(joint.index(z, t));
    }
    Eigen::MatrixXd qff(fi.size(), fi.size()), qfo(fi.size(), oi.size());
    for (std::size_t a = 0; a < fi.size(); ++a) {
      for (std::size_t b = 0; b < fi.size(); ++b) qff(a, b) = q(fi[a], fi[b]);
      for (std::size_t b = 0; b < oi.size(); ++b) qfo(a, b) = q(fi[a], oi[b]);
    }
    Eigen::VectorXd x(obs.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.normal();
    const Eigen::VectorXd mu = prior_mean(h.drift, joint);
    Eigen::VectorXd mu_o(oi.size()), mu_f(fi.size());
    for (std::size_t a = 0; a < oi.size(); ++a) mu_o[a] = mu[oi[a]];
    for (std::size_t a = 0; a < fi.size(); ++a) mu_f[a] = mu[fi[a]];
    const Eigen::MatrixXd cov = qff.inverse();
    const Eigen::VectorXd mean = mu_f - cov * qfo * (x - mu_o);

    const FutureConditional fc(obs, k, h);
    CHECK((fc.mean(x) - mean).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((fc.covariance() - cov).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("future block is positive definite and variance grows with horizon") {
  const GMRFHyper h{1.3, 0.8, 0.0};
  for (int k = 1; k <= 6; ++k) {
    const FutureConditional fc({4, 3}, k, h);
    const Eigen::MatrixXd cov = fc.covariance();
    CHECK(sorted_eigenvalues(cov)[0] > 0.0);
    for (int z = 0; z < 4; ++z) {
      for (int t = 0; t + 1 < k; ++t) CHECK(cov(z * k + t, z * k + t) <= cov(z * k + t + 1, z * k + t + 1));
    }
  }
}

TEST_CASE("chain adapts delta to the target acceptance and is reproducible") {
  Rng rng(10);
  const Eigen::MatrixXd x = testkit::smooth_logit_surface(20, 8);
  Eigen::MatrixXd p = x.unaryExpr([](double v) { return testkit::logistic(v); });
  const MortalityGrid grid = testkit::grid_from_probs(p, 1e5, rng);
  GMRFChainConfig cfg;
  cfg.iterations = 6000;
  cfg.burnin = 3000;
  cfg.thin = 10;
  cfg.seed = 3;
  const GMRFPosterior post = run_chain_gmrf(grid, cfg);
  CHECK(post.acceptance >= 0.50);
  CHECK(post.acceptance <= 0.60);
  CHECK(post.draws.size() == 300);
  CHECK(post.rho_acceptance > 0.0);

  cfg.iterations = 300;
  cfg.burnin = 100;
  const GMRFPosterior a = run_chain_gmrf(grid, cfg);
  const GMRFPosterior b = run_chain_gmrf(grid, cfg);
  REQUIRE(a.draws.size() == b.draws.size());
  for (std::size_t i = 0; i < a.draws.size(); ++i) {
    CHECK(a.draws[i].x == b.draws[i].x);
    CHECK(a.draws[i].hyper.tau == b.draws[i].hyper.tau);
  }

  Rng frng(1);
  const ForecastSet fs = predict_gmrf(a, 3, frng);
  CHECK(fs.horizons() == 3);
  CHECK(fs.n_ages() == 20);
  CHECK(fs.draws() == static_cast<int>(a.draws.size()));
  CHECK(fs.origin_year == grid.last_year());
  for (const auto& m : fs.samples) {
    CHECK(m.minCoeff() > 0.0);
    CHECK(m.maxCoeff() < 1.0);
  }
}

TEST_CASE("invalid hyperparameters are rejected") {
  CHECK_THROWS_AS(PrecisionOperator({3, 3}, {0.0, 1.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(PrecisionOperator({3, 3}, {1.0, 2.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(FutureConditional({3, 3}, 0, {}), ValidationError);
}
