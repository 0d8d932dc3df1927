#include "mortfc/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <tuple>

#include "mortfc/csv.hpp"
#include "mortfc/errors.hpp"

namespace mortfc {

std::string_view to_string(ModelTag tag) {
  switch (tag) {
    case ModelTag::hp: return "hp";
    case ModelTag::gmrf: return "gmrf";
    case ModelTag::external: return "external";
  }
  return "external";
}

ModelTag parse_model_tag(std::string_view name) {
  if (name == "hp") return ModelTag::hp;
  if (name == "gmrf") return ModelTag::gmrf;
  if (name == "external") return ModelTag::external;
  throw ValidationError("unknown model '" + std::string(name) + "' (expected hp or gmrf)");
}

Eigen::VectorXd ForecastSet::age_draws(int age, int horizon) const {
  if (horizon < 1 || horizon > horizons()) throw ValidationError("horizon out of range");
  if (age < first_age || age > last_age()) throw ValidationError("age out of range");
  return samples[static_cast<std::size_t>(horizon - 1)].row(age - first_age).transpose();
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::pair<double, double> predictive_interval(const ForecastSet& fs, int age, int horizon, double level) {
  if (!(level >= 0.0 && level < 1.0)) throw ValidationError("interval level must lie in [0,1)");
  const Eigen::VectorXd d = fs.age_draws(age, horizon);
  std::vector<double> v(d.data(), d.data() + d.size());
  const double tail = 0.5 * (1.0 - level);
  return {quantile(v, tail), quantile(v, 1.0 - tail)};
}

double predictive_mean(const ForecastSet& fs, int age, int horizon) { return fs.age_draws(age, horizon).mean(); }

Eigen::VectorXd survival_curve(const ForecastSet& fs, int age, int years, int horizon) {
  if (years < 1) throw ValidationError("survival_curve: s must be at least 1");
  if (age < fs.first_age || age + years - 1 > fs.last_age()) {
    throw ValidationError("survival_curve: ages " + std::to_string(age) + ".." + std::to_string(age + years - 1) +
                          " exceed the forecast age range");
  }
  if (horizon < 1 || horizon > fs.horizons()) throw ValidationError("survival_curve: horizon out of range");
  const Eigen::MatrixXd& p = fs.samples[static_cast<std::size_t>(horizon - 1)];
  Eigen::VectorXd out = Eigen::VectorXd::Ones(p.cols());
  for (int i = 0; i < years; ++i) {
    out.array() *= 1.0 - p.row(age - fs.first_age + i).transpose().array();
  }
  return out;
}

Eigen::VectorXd life_expectancy(const ForecastSet& fs, int age, int horizon) {
  if (age < fs.first_age || age > fs.last_age()) throw ValidationError("life_expectancy: age out of range");
  if (horizon < 1 || horizon > fs.horizons()) throw ValidationError("life_expectancy: horizon out of range");
  const Eigen::MatrixXd& p = fs.samples[static_cast<std::size_t>(horizon - 1)];
  Eigen::VectorXd survival = Eigen::VectorXd::Ones(p.cols());
  Eigen::VectorXd total = Eigen::VectorXd::Zero(p.cols());
  for (int s = 1; age + s <= fs.last_age(); ++s) {
    survival.array() *= 1.0 - p.row(age - fs.first_age + s - 1).transpose().array();
    total += survival;
  }
  return total;
}

void write_forecast_draws_csv(std::ostream& out, const ForecastSet& fs) {
  out << "age,horizon,draw,p\n";
  for (int h = 1; h <= fs.horizons(); ++h) {
    const Eigen::MatrixXd& p = fs.samples[static_cast<std::size_t>(h - 1)];
    for (int z = 0; z < p.rows(); ++z) {
      for (int m = 0; m < p.cols(); ++m) {
        out << fs.first_age + z << ',' << h << ',' << m << ',' << csv::format_double(p(z, m)) << '\n';
      }
    }
  }
}

ForecastSet read_forecast_draws_csv(std::istream& in, ModelTag tag) {
  std::string line;
  if (!std::getline(in, line) || csv::trim(line) != "age,horizon,draw,p") {
    throw DataError("forecast CSV: expected header 'age,horizon,draw,p'");
  }
  std::map<std::tuple<int, int, int>, double> cells;
  int age_lo = 1 << 30, age_hi = -1, h_hi = 0, m_hi = -1;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(csv::trim(line));
    if (f.size() != 4) throw DataError("forecast CSV line " + std::to_string(line_no) + ": expected 4 fields");
    const int age = static_cast<int>(csv::parse_long(f[0]));
    const int h = static_cast<int>(csv::parse_long(f[1]));
    const int m = static_cast<int>(csv::parse_long(f[2]));
    if (h < 1 || m < 0) throw DataError("forecast CSV line " + std::to_string(line_no) + ": bad horizon or draw");
    const double p = csv::parse_double(f[3]);
    if (!(p >= 0.0 && p <= 1.0)) {
      throw DataError("forecast CSV line " + std::to_string(line_no) + ": p must lie in [0,1]");
    }
    if (!cells.emplace(std::make_tuple(h, age, m), p).second) {
      throw DataError("forecast CSV line " + std::to_string(line_no) + ": duplicate (age, horizon, draw)");
    }
    age_lo = std::min(age_lo, age);
    age_hi = std::max(age_hi, age);
    h_hi = std::max(h_hi, h);
    m_hi = std::max(m_hi, m);
  }
  if (cells.empty()) throw DataError("forecast CSV: no rows");
  ForecastSet fs;
  fs.model = tag;
  fs.first_age = age_lo;
  const int na = age_hi - age_lo + 1;
  if (static_cast<long>(na) * h_hi * (m_hi + 1) != static_cast<long>(cells.size())) {
    throw DataError("forecast CSV: draw counts differ across ages or horizons");
  }
  fs.samples.assign(static_cast<std::size_t>(h_hi), Eigen::MatrixXd(na, m_hi + 1));
  for (const auto& [key, v] : cells) {
    const auto [h, age, m] = key;
    fs.samples[static_cast<std::size_t>(h - 1)](age - age_lo, m) = v;
  }
  return fs;
}

void write_forecast_summary_csv(std::ostream& out, const ForecastSet& fs, double level) {
  const int pct = static_cast<int>(std::lround(level * 100.0));
  out << "age,horizon,mean,lo" << pct << ",hi" << pct << '\n';
  for (int h = 1; h <= fs.horizons(); ++h) {
    for (int age = fs.first_age; age <= fs.last_age(); ++age) {
      const auto [lo, hi] = predictive_interval(fs, age, h, level);
      out << age << ',' << h << ',' << csv::format_double(predictive_mean(fs, age, h)) << ','
          << csv::format_double(lo) << ',' << csv::format_double(hi) << '\n';
    }
  }
}

void write_survival_csv(std::ostream& out, const ForecastSet& fs, const std::vector<int>& years) {
  out << "age,horizon,s,draw,survival\n";
  for (int h = 1; h <= fs.horizons(); ++h) {
    for (int s : years) {
      for (int age = fs.first_age; age + s - 1 <= fs.last_age(); ++age) {
        const Eigen::VectorXd surv = survival_curve(fs, age, s, h);
        for (Eigen::Index m = 0; m < surv.size(); ++m) {
          out << age << ',' << h << ',' << s << ',' << m << ',' << csv::format_double(surv[m]) << '\n';
        }
      }
    }
  }
}

}  // namespace mortfc
