#include <doctest.h>

#include <sstream>

#include "mortfc/drawsio.hpp"
#include "mortfc/errors.hpp"
#include "testkit.hpp"

using namespace mortfc;

namespace {

hp::HPPosterior small_hp_posterior() {
  Rng rng(3);
  const auto path = testkit::reference_hp_path(3, rng);
  const MortalityGrid g = testkit::grid_from_probs(testkit::hp_probs(path, 90), 2e4, rng, 0, 2001);
  hp::HPChainConfig cfg;
  cfg.iterations = 60;
  cfg.burnin = 20;
  cfg.thin = 8;
  cfg.seed = 18446744073709551557ULL;
  return hp::run_chain(g, cfg);
}

gmrf::GMRFPosterior small_gmrf_posterior() {
  Rng rng(4);
  const Eigen::MatrixXd x = testkit::smooth_logit_surface(6, 4);
  const MortalityGrid g =
      testkit::grid_from_probs(x.unaryExpr([](double v) { return testkit::logistic(v); }), 1e5, rng, 20, 1990);
  gmrf::GMRFChainConfig cfg;
  cfg.iterations = 50;
  cfg.burnin = 10;
  cfg.thin = 10;
  cfg.seed = 12;
  return gmrf::run_chain_gmrf(g, cfg);
}

LoadedDraws reread(const std::string& text) {
  std::istringstream in(text);
  return read_draws_csv(in);
}

}  // namespace

TEST_CASE("HP draws round-trip bit-exactly") {
  const hp::HPPosterior post = small_hp_posterior();
  std::ostringstream out;
  write_hp_draws_csv(out, post);
  CHECK(out.str().rfind("iter,block,name,value\n", 0) == 0);
  const LoadedDraws back = reread(out.str());
  REQUIRE(back.hp);
  CHECK(back.model == ModelTag::hp);
  CHECK(!back.gmrf);
  const hp::HPPosterior& b = *back.hp;
  CHECK(b.seed == post.seed);
  CHECK(b.first_age == post.first_age);
  CHECK(b.n_ages == post.n_ages);
  CHECK(b.first_year == 2001);
  CHECK(b.n_years == 3);
  CHECK(b.box.lower == post.box.lower);
  CHECK(b.box.upper == post.box.upper);
  CHECK(b.acceptance == post.acceptance);
  CHECK(b.scales == post.scales);
  REQUIRE(b.draws.size() == post.draws.size());
  for (std::size_t m = 0; m < b.draws.size(); ++m) {
    CHECK(b.draws[m].iteration == post.draws[m].iteration);
    for (std::size_t t = 0; t < 3; ++t) CHECK(b.draws[m].path[t] == post.draws[m].path[t]);
    CHECK(b.draws[m].hyper.drift == post.draws[m].hyper.drift);
    CHECK(b.draws[m].hyper.innovation == post.draws[m].hyper.innovation);
    CHECK(b.draws[m].hyper.aux == post.draws[m].hyper.aux);
  }
  std::ostringstream again;
  write_hp_draws_csv(again, b);
  CHECK(again.str() == out.str());
}

TEST_CASE("GMRF draws round-trip bit-exactly") {
  const gmrf::GMRFPosterior post = small_gmrf_posterior();
  std::ostringstream out;
  write_gmrf_draws_csv(out, post);
  const LoadedDraws back = reread(out.str());
  REQUIRE(back.gmrf);
  CHECK(back.model == ModelTag::gmrf);
  const gmrf::GMRFPosterior& b = *back.gmrf;
  CHECK(b.first_age == 20);
  CHECK(b.first_year == 1990);
  CHECK(b.shape.n_ages == 6);
  CHECK(b.shape.n_years == 4);
  CHECK(b.seed == 12);
  CHECK(b.delta == post.delta);
  REQUIRE(b.draws.size() == post.draws.size());
  for (std::size_t m = 0; m < b.draws.size(); ++m) {
    CHECK(b.draws[m].x == post.draws[m].x);
    CHECK(b.draws[m].hyper.tau == post.draws[m].hyper.tau);
    CHECK(b.draws[m].hyper.rho_age == post.draws[m].hyper.rho_age);
    CHECK(b.draws[m].hyper.drift == post.draws[m].hyper.drift);
  }
  std::ostringstream again;
  write_gmrf_draws_csv(again, b);
  CHECK(again.str() == out.str());
}

TEST_CASE("scalar traces cover every sampled scalar") {
  const hp::HPPosterior hpp = small_hp_posterior();
  LoadedDraws a;
  a.hp = hpp;
  const auto ta = scalar_traces(a);
  CHECK(ta.size() == 8 * 3 + 8 + 36 + 8);
  for (const auto& tr : ta) CHECK(tr.values.size() == hpp.draws.size());
  CHECK(ta.front().block == "psi");
  CHECK(ta.front().name == "A.2001");

  LoadedDraws b;
  b.model = ModelTag::gmrf;
  b.gmrf = small_gmrf_posterior();
  const auto tb = scalar_traces(b);
  CHECK(tb.size() == 6 * 4 + 3);
  CHECK(tb.front().name == "20.1990");
}

TEST_CASE("malformed draws files report line numbers") {
  std::ostringstream out;
  write_gmrf_draws_csv(out, small_gmrf_posterior());
  const std::string good = out.str();

  CHECK_THROWS_AS(reread("iter,value\n"), DataError);
  CHECK_THROWS_AS(reread("iter,block,name,value\n"), DataError);

  // Corrupt the value on line 12.
  std::istringstream lines(good);
  std::string line, text;
  for (int n = 1; std::getline(lines, line); ++n) {
    if (n == 12) line = line.substr(0, line.rfind(',')) + ",abc";
    text += line + "\n";
  }
  try {
    reread(text);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 12") != std::string::npos);
  }

  // Drop the last row: the final draw is incomplete.
  const std::string truncated = good.substr(0, good.rfind('\n', good.size() - 2) + 1);
  CHECK_THROWS_AS(reread(truncated), DataError);
}
