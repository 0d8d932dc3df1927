#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "mortfc/errors.hpp"
#include "mortfc/forecast.hpp"
#include "mortfc/rng.hpp"

using namespace mortfc;

namespace {

ForecastSet random_set(int first_age, int ages, int horizons, int draws, Rng& rng, double scale = 0.2) {
  ForecastSet fs;
  fs.model = ModelTag::gmrf;
  fs.first_age = first_age;
  fs.origin_year = 2000;
  for (int h = 0; h < horizons; ++h) {
    Eigen::MatrixXd p(ages, draws);
    for (int z = 0; z < ages; ++z)
      for (int m = 0; m < draws; ++m) p(z, m) = scale * (0.01 + 0.98 * rng.uniform());
    fs.samples.push_back(p);
  }
  return fs;
}

ForecastSet constant_set(int ages, int draws, double value) {
  ForecastSet fs;
  fs.first_age = 0;
  fs.samples.assign(2, Eigen::MatrixXd::Constant(ages, draws, value));
  return fs;
}

}  // namespace

TEST_CASE("constant samples give a degenerate interval") {
  const ForecastSet fs = constant_set(3, 50, 0.0123);
  const auto [lo, hi] = predictive_interval(fs, 1, 2, 0.95);
  CHECK(lo == 0.0123);
  CHECK(hi == 0.0123);
  CHECK(predictive_mean(fs, 1, 2) == doctest::Approx(0.0123).epsilon(1e-15));
}

TEST_CASE("interval on 1..100 over 101 follows the order statistics") {
  ForecastSet fs;
  fs.first_age = 40;
  Eigen::MatrixXd p(1, 100);
  // Shuffled so the interval cannot depend on storage order.
  std::vector<int> idx(100);
  std::iota(idx.begin(), idx.end(), 1);
  Rng rng(3);
  std::shuffle(idx.begin(), idx.end(), rng);
  for (int m = 0; m < 100; ++m) p(0, m) = idx[static_cast<std::size_t>(m)] / 101.0;
  fs.samples.push_back(p);
  // Position 1 + 99 q on the order statistics i / 101.
  const auto [lo, hi] = predictive_interval(fs, 40, 1, 0.9);
  CHECK(lo == doctest::Approx((1 + 99 * 0.05) / 101).epsilon(1e-13));
  CHECK(hi == doctest::Approx((1 + 99 * 0.95) / 101).epsilon(1e-13));
  CHECK(std::abs(lo - 0.05) < 0.01);
  CHECK(std::abs(hi - 0.95) < 0.01);

  const auto [m0, m1] = predictive_interval(fs, 40, 1, 0.0);
  CHECK(m0 == m1);
  CHECK(m0 == doctest::Approx(50.5 / 101).epsilon(1e-13));
}

TEST_CASE("intervals are nested in the level") {
  Rng rng(5);
  const ForecastSet fs = random_set(0, 4, 2, 137, rng);
  for (int age = 0; age < 4; ++age) {
    double prev_lo = INFINITY, prev_hi = -INFINITY;
    for (double level = 0.0; level < 0.999; level += 0.05) {
      const auto [lo, hi] = predictive_interval(fs, age, 2, level);
      CHECK(lo <= prev_lo);
      CHECK(hi >= prev_hi);
      CHECK(lo <= hi);
      prev_lo = lo;
      prev_hi = hi;
    }
  }
  CHECK_THROWS_AS(predictive_interval(fs, 0, 1, 1.0), ValidationError);
  CHECK_THROWS_AS(predictive_interval(fs, 0, 1, -0.1), ValidationError);
  CHECK_THROWS_AS(predictive_interval(fs, 4, 1, 0.5), ValidationError);
  CHECK_THROWS_AS(predictive_interval(fs, 0, 3, 0.5), ValidationError);
}

TEST_CASE("survival over one year is one minus p") {
  Rng rng(7);
  const ForecastSet fs = random_set(10, 5, 2, 30, rng);
  const Eigen::VectorXd s = survival_curve(fs, 12, 1, 2);
  for (int m = 0; m < 30; ++m) CHECK(s[m] == 1.0 - fs.samples[1](2, m));
}

TEST_CASE("zero death probabilities survive with certainty") {
  const ForecastSet fs = constant_set(6, 10, 0.0);
  CHECK((survival_curve(fs, 0, 6, 1).array() == 1.0).all());
  CHECK((life_expectancy(fs, 2, 1).array() == 3.0).all());
  CHECK((life_expectancy(fs, 0, 1).array() == 5.0).all());
  CHECK((life_expectancy(fs, 5, 1).array() == 0.0).all());
}

TEST_CASE("certain death leaves no expectation") {
  const ForecastSet fs = constant_set(6, 10, 1.0);
  CHECK((life_expectancy(fs, 1, 2).array() == 0.0).all());
  CHECK((survival_curve(fs, 1, 2, 2).array() == 0.0).all());
}

TEST_CASE("three-age survival and expectation by hand") {
  ForecastSet fs;
  fs.first_age = 60;
  Eigen::MatrixXd p(4, 2);
  p << 0.1, 0.3,  //
      0.2, 0.1,   //
      0.5, 0.25,  //
      0.9, 0.9;
  fs.samples.push_back(p);
  const Eigen::VectorXd s = survival_curve(fs, 60, 3, 1);
  CHECK(s[0] == doctest::Approx(0.9 * 0.8 * 0.5).epsilon(1e-15));
  CHECK(s[1] == doctest::Approx(0.7 * 0.9 * 0.75).epsilon(1e-15));
  const Eigen::VectorXd e = life_expectancy(fs, 60, 1);
  CHECK(e[0] == doctest::Approx(0.9 + 0.9 * 0.8 + 0.9 * 0.8 * 0.5).epsilon(1e-15));
  CHECK(e[1] == doctest::Approx(0.7 + 0.7 * 0.9 + 0.7 * 0.9 * 0.75).epsilon(1e-15));
  CHECK_THROWS_AS(survival_curve(fs, 61, 4, 1), ValidationError);
  CHECK_THROWS_AS(survival_curve(fs, 59, 1, 1), ValidationError);
  CHECK_THROWS_AS(survival_curve(fs, 60, 0, 1), ValidationError);
  CHECK_THROWS_AS(life_expectancy(fs, 64, 1), ValidationError);
}

TEST_CASE("survival curves lie in (0,1] and decrease in s") {
  Rng rng(9);
  for (int rep = 0; rep < 20; ++rep) {
    const ForecastSet fs = random_set(0, 30, 3, 40, rng, 0.5);
    for (int age : {0, 7, 20}) {
      Eigen::VectorXd prev = Eigen::VectorXd::Ones(40);
      for (int s = 1; age + s - 1 <= fs.last_age(); ++s) {
        const Eigen::VectorXd cur = survival_curve(fs, age, s, 3);
        CHECK((cur.array() > 0.0).all());
        CHECK((cur.array() <= 1.0).all());
        CHECK((cur.array() <= prev.array()).all());
        prev = cur;
      }
    }
  }
}

TEST_CASE("permuting draws jointly permutes survival draws") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const ForecastSet fs = random_set(0, 12, 2, 25, rng);
    std::vector<int> perm(25);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    ForecastSet shuffled = fs;
    for (auto& p : shuffled.samples) {
      Eigen::MatrixXd q(p.rows(), p.cols());
      for (int m = 0; m < 25; ++m) q.col(m) = p.col(perm[static_cast<std::size_t>(m)]);
      p = q;
    }
    const Eigen::VectorXd a = survival_curve(fs, 2, 8, 2);
    const Eigen::VectorXd b = survival_curve(shuffled, 2, 8, 2);
    for (int m = 0; m < 25; ++m) CHECK(b[m] == a[perm[static_cast<std::size_t>(m)]]);
    std::vector<double> va(a.data(), a.data() + 25), vb(b.data(), b.data() + 25);
    std::sort(va.begin(), va.end());
    std::sort(vb.begin(), vb.end());
    CHECK(va == vb);
  }
}

TEST_CASE("survival keeps draws paired across ages") {
  // Perfectly anti-correlated ages: pairing gives (1-p)(1-(1-p)) per draw,
  // which differs from recombining the marginals.
  ForecastSet fs;
  fs.first_age = 0;
  Eigen::MatrixXd p(2, 2);
  p << 0.1, 0.9,  //
      0.9, 0.1;
  fs.samples.push_back(p);
  const Eigen::VectorXd s = survival_curve(fs, 0, 2, 1);
  CHECK(s[0] == doctest::Approx(0.09).epsilon(1e-15));
  CHECK(s[1] == doctest::Approx(0.09).epsilon(1e-15));
}

TEST_CASE("draws CSV round-trips bit-exactly") {
  Rng rng(13);
  for (int rep = 0; rep < 5; ++rep) {
    ForecastSet fs = random_set(20 + rep, 7, 3, 11, rng);
    fs.samples[0](0, 0) = 1.0 / 3.0;
    fs.samples[1](2, 3) = 5e-324;
    std::ostringstream out;
    write_forecast_draws_csv(out, fs);
    std::istringstream in(out.str());
    const ForecastSet back = read_forecast_draws_csv(in, ModelTag::gmrf);
    CHECK(back.first_age == fs.first_age);
    CHECK(back.model == ModelTag::gmrf);
    REQUIRE(back.horizons() == fs.horizons());
    for (int h = 0; h < fs.horizons(); ++h) CHECK(back.samples[static_cast<std::size_t>(h)] == fs.samples[static_cast<std::size_t>(h)]);
  }
}

TEST_CASE("draws CSV rejects malformed input") {
  auto read = [](const std::string& text) {
    std::istringstream in(text);
    return read_forecast_draws_csv(in);
  };
  CHECK_THROWS_AS(read("age,p\n"), DataError);
  CHECK_THROWS_AS(read("age,horizon,draw,p\n"), DataError);
  CHECK_THROWS_AS(read("age,horizon,draw,p\n0,1,0,0.1\n0,1,0,0.2\n"), DataError);
  CHECK_THROWS_AS(read("age,horizon,draw,p\n0,1,0,1.5\n"), DataError);
  CHECK_THROWS_AS(read("age,horizon,draw,p\n0,1,0,nan\n"), DataError);
  CHECK_THROWS_AS(read("age,horizon,draw,p\n0,1,0,0.1\n0,1,1,0.1\n1,1,0,0.1\n"), DataError);
  CHECK_THROWS_AS(read("age,horizon,draw,p\n0,0,0,0.1\n"), DataError);
  CHECK_THROWS_AS(read("age,horizon,draw,p\n0,1,0\n"), DataError);
}

TEST_CASE("summary CSV reports the mean and the interval") {
  Rng rng(15);
  const ForecastSet fs = random_set(5, 3, 2, 21, rng);
  std::ostringstream out;
  write_forecast_summary_csv(out, fs, 0.9);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "age,horizon,mean,lo90,hi90");
  int rows = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string f;
    std::vector<std::string> fields;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    REQUIRE(fields.size() == 5);
    const int age = std::stoi(fields[0]), h = std::stoi(fields[1]);
    const auto [lo, hi] = predictive_interval(fs, age, h, 0.9);
    CHECK(std::stod(fields[2]) == predictive_mean(fs, age, h));
    CHECK(std::stod(fields[3]) == lo);
    CHECK(std::stod(fields[4]) == hi);
    ++rows;
  }
  CHECK(rows == 6);
}

TEST_CASE("survival CSV agrees with survival_curve") {
  Rng rng(17);
  const ForecastSet fs = random_set(0, 6, 2, 4, rng);
  std::ostringstream out;
  write_survival_csv(out, fs, {1, 5});
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "age,horizon,s,draw,survival");
  int rows = 0;
  while (std::getline(in, line)) {
    int age, h, s, m;
    double v;
    char c;
    std::istringstream ls(line);
    ls >> age >> c >> h >> c >> s >> c >> m >> c >> v;
    CHECK(v == survival_curve(fs, age, s, h)[m]);
    ++rows;
  }
  // s=1: 6 ages, s=5: 2 ages, each with 4 draws over 2 horizons.
  CHECK(rows == (6 + 2) * 4 * 2);
}

TEST_CASE("model tags parse and print") {
  for (ModelTag t : {ModelTag::hp, ModelTag::gmrf, ModelTag::external}) CHECK(parse_model_tag(to_string(t)) == t);
  CHECK_THROWS_AS(parse_model_tag("lc"), ValidationError);
}
