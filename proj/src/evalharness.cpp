#include "mortfc/evalharness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <istream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "mortfc/csv.hpp"
#include "mortfc/errors.hpp"

namespace mortfc::eval {

double interval_score(double lo, double hi, double obs, double level) {
  if (!(lo <= hi)) throw ValidationError("interval_score: lower bound exceeds upper bound");
  const double alpha = 1.0 - level;
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("interval_score: level must lie in (0,1)");
  double score = hi - lo;
  if (obs < lo) score += (2.0 / alpha) * (lo - obs);
  if (obs > hi) score += (2.0 / alpha) * (obs - hi);
  return score;
}

CoverageWidth coverage_and_width(std::span<const Interval> intervals, std::span<const double> observed) {
  if (intervals.size() != observed.size()) throw ValidationError("coverage_and_width: length mismatch");
  if (intervals.empty()) throw ValidationError("coverage_and_width: no intervals");
  long covered = 0;
  double width = 0.0;
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    if (intervals[i].lo <= observed[i] && observed[i] <= intervals[i].hi) ++covered;
    width += intervals[i].hi - intervals[i].lo;
  }
  const auto n = static_cast<double>(intervals.size());
  return {static_cast<double>(covered) / n, width / n};
}

double rmse(std::span<const double> predicted, std::span<const double> observed) {
  if (predicted.size() != observed.size()) throw ValidationError("rmse: length mismatch");
  if (predicted.empty()) throw ValidationError("rmse: no forecasts");
  double acc = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double e = predicted[i] - observed[i];
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(predicted.size()));
}

std::vector<int> BacktestPlan::origins(int horizon) const {
  std::vector<int> out;
  for (int t = first_origin; t <= last_data_year - horizon; ++t) out.push_back(t);
  return out;
}

std::vector<int> BacktestPlan::all_origins() const {
  std::set<int> all;
  for (int k : horizons) {
    for (int t : origins(k)) all.insert(t);
  }
  return {all.begin(), all.end()};
}

int BacktestPlan::max_horizon_for(int origin) const {
  int best = 0;
  for (int k : horizons) {
    if (origin + k <= last_data_year) best = std::max(best, k);
  }
  return best;
}

void BacktestPlan::validate(const MortalityGrid& grid) const {
  if (window < 1) throw ValidationError("backtest window must be at least one year");
  if (horizons.empty()) throw ValidationError("backtest needs at least one horizon");
  for (int k : horizons) {
    if (k < 1) throw ValidationError("backtest horizons must be positive");
    if (origins(k).empty()) throw ValidationError("no origins for horizon " + std::to_string(k));
  }
  if (age_lo > age_hi) throw ValidationError("backtest age range is empty");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("interval level must lie in (0,1)");
  if (age_lo < grid.first_age() || age_hi > grid.last_age()) {
    throw DataError("ages " + std::to_string(age_lo) + ".." + std::to_string(age_hi) + " are not covered by the data");
  }
  const int need_lo = first_origin - window + 1;
  if (need_lo < grid.first_year() || last_data_year > grid.last_year()) {
    throw DataError("years " + std::to_string(need_lo) + ".." + std::to_string(last_data_year) +
                    " are not covered by the data (" + std::to_string(grid.first_year()) + ".." +
                    std::to_string(grid.last_year()) + ")");
  }
}

ForecastModel from_sampler(SamplingModel model, double level) {
  return [model = std::move(model), level](const MortalityGrid& train, int max_horizon, std::uint64_t seed) {
    const ForecastSet fs = model(train, max_horizon, seed);
    std::vector<PointForecast> out;
    for (int h = 1; h <= fs.horizons(); ++h) {
      for (int age = fs.first_age; age <= fs.last_age(); ++age) {
        const auto [lo, hi] = predictive_interval(fs, age, h, level);
        out.push_back({h, age, predictive_mean(fs, age, h), lo, hi});
      }
    }
    return out;
  };
}

ForecastModel oracle_model(const MortalityGrid& full, double eps) {
  return [full, eps](const MortalityGrid& train, int max_horizon, std::uint64_t) {
    std::vector<PointForecast> out;
    for (int h = 1; h <= max_horizon; ++h) {
      const int year = train.last_year() + h;
      if (year > full.last_year()) break;
      for (int age = train.first_age(); age <= train.last_age(); ++age) {
        const int z = age - full.first_age();
        const int t = year - full.first_year();
        const double p = full.deaths()(z, t) / full.exposures()(z, t);
        out.push_back({h, age, p, p - eps, p + eps});
      }
    }
    return out;
  };
}

ScoreTable score_summaries(const std::vector<SummaryRow>& summaries, const MortalityGrid& grid, double level) {
  struct Case {
    int origin;
    double mean, lo, hi;
  };
  std::map<std::tuple<std::string, int, int>, std::vector<Case>> groups;
  std::set<std::tuple<std::string, int, int, int>> seen;
  for (const SummaryRow& r : summaries) {
    if (!seen.insert({r.model, r.origin, r.horizon, r.age}).second) {
      throw DataError("duplicate forecast for model " + r.model + ", origin " + std::to_string(r.origin) +
                      ", horizon " + std::to_string(r.horizon) + ", age " + std::to_string(r.age));
    }
    groups[{r.model, r.horizon, r.age}].push_back({r.origin, r.mean, r.lo, r.hi});
  }

  ScoreTable table;
  table.level = level;
  std::map<std::pair<std::string, int>, std::vector<int>> origin_sets;
  for (auto& [key, cases] : groups) {
    const auto& [model, horizon, age] = key;
    std::sort(cases.begin(), cases.end(), [](const Case& a, const Case& b) { return a.origin < b.origin; });
    std::vector<Interval> iv;
    std::vector<double> obs, pred;
    std::vector<int> origins;
    double score = 0.0;
    for (const Case& c : cases) {
      const int year = c.origin + horizon;
      if (age < grid.first_age() || age > grid.last_age() || year < grid.first_year() || year > grid.last_year()) {
        throw DataError("no observation for age " + std::to_string(age) + " in year " + std::to_string(year));
      }
      const int z = age - grid.first_age();
      const int t = year - grid.first_year();
      const double o = grid.deaths()(z, t) / grid.exposures()(z, t);
      iv.push_back({c.lo, c.hi});
      obs.push_back(o);
      pred.push_back(c.mean);
      origins.push_back(c.origin);
      score += interval_score(c.lo, c.hi, o, level);
    }
    auto [it, inserted] = origin_sets.try_emplace({model, horizon}, origins);
    if (!inserted && it->second != origins) {
      throw DataError("model " + model + " horizon " + std::to_string(horizon) + ": age " + std::to_string(age) +
                      " covers a different set of origins than other ages");
    }
    const CoverageWidth cw = coverage_and_width(iv, obs);
    table.rows.push_back({model, horizon, age, static_cast<long>(cases.size()), cw.coverage, cw.mean_width,
                          score / static_cast<double>(cases.size()), rmse(pred, obs)});
  }

  std::map<std::pair<std::string, int>, std::vector<const ScoreRow*>> by_model;
  for (const ScoreRow& r : table.rows) by_model[{r.model, r.horizon}].push_back(&r);
  for (const auto& [key, rows] : by_model) {
    ScoreAverage avg;
    avg.model = key.first;
    avg.horizon = key.second;
    avg.rounds = rows.front()->rounds;
    for (const ScoreRow* r : rows) {
      avg.coverage += r->coverage;
      avg.mean_width += r->mean_width;
      avg.mean_score += r->mean_score;
      avg.rmse += r->rmse;
    }
    const auto n = static_cast<double>(rows.size());
    avg.coverage /= n;
    avg.mean_width /= n;
    avg.mean_score /= n;
    avg.rmse /= n;
    table.averages.push_back(avg);
  }
  return table;
}

std::uint64_t origin_seed(std::uint64_t base, int origin) {
  // splitmix64 finalizer over the combined key
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(origin) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

BacktestResult run_backtest(const MortalityGrid& grid, const BacktestPlan& plan, const std::string& model_name,
                            const ForecastModel& model, unsigned threads) {
  plan.validate(grid);
  const std::vector<int> origins = plan.all_origins();
  std::vector<std::optional<std::vector<PointForecast>>> results(origins.size());
  std::vector<std::string> errors(origins.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < origins.size(); i = next++) {
      const int origin = origins[i];
      try {
        const MortalityGrid train =
            grid.window({plan.age_lo, plan.age_hi, origin - plan.window + 1, origin});
        results[i] = model(train, plan.max_horizon_for(origin), origin_seed(plan.seed, origin));
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(origins.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  BacktestResult out;
  std::vector<FailedOrigin> failures;
  for (std::size_t i = 0; i < origins.size(); ++i) {
    if (!results[i]) {
      failures.push_back({model_name, origins[i], errors[i]});
      continue;
    }
    for (const PointForecast& pf : *results[i]) {
      const bool wanted = std::find(plan.horizons.begin(), plan.horizons.end(), pf.horizon) != plan.horizons.end();
      if (!wanted || origins[i] + pf.horizon > plan.last_data_year) continue;
      if (pf.age < plan.age_lo || pf.age > plan.age_hi) continue;
      out.summaries.push_back({model_name, origins[i], pf.horizon, pf.age, pf.mean, pf.lo, pf.hi});
    }
  }
  out.table = score_summaries(out.summaries, grid, plan.level);
  out.table.failures = std::move(failures);
  return out;
}

void write_summaries_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "model,origin,horizon,age,mean,lo,hi\n";
  for (const SummaryRow& r : rows) {
    out << r.model << ',' << r.origin << ',' << r.horizon << ',' << r.age << ',' << csv::format_double(r.mean) << ','
        << csv::format_double(r.lo) << ',' << csv::format_double(r.hi) << '\n';
  }
}

std::vector<SummaryRow> ingest_external_forecasts(std::istream& in, const BacktestPlan* plan) {
  std::string line;
  if (!std::getline(in, line) || csv::trim(line) != "model,origin,horizon,age,mean,lo,hi") {
    throw DataError("external forecasts: expected header 'model,origin,horizon,age,mean,lo,hi'");
  }
  std::vector<SummaryRow> rows;
  std::vector<std::string> problems;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view body = csv::trim(line);
    if (body.empty()) continue;
    try {
      const auto f = csv::split(body);
      if (f.size() != 7) throw DataError("expected 7 fields, found " + std::to_string(f.size()));
      SummaryRow r;
      r.model = std::string(csv::trim(f[0]));
      if (r.model.empty()) throw DataError("empty model name");
      r.origin = static_cast<int>(csv::parse_long(f[1]));
      r.horizon = static_cast<int>(csv::parse_long(f[2]));
      r.age = static_cast<int>(csv::parse_long(f[3]));
      r.mean = csv::parse_double(f[4]);
      r.lo = csv::parse_double(f[5]);
      r.hi = csv::parse_double(f[6]);
      if (!(r.lo <= r.hi)) throw DataError("lo exceeds hi");
      if (r.horizon < 1) throw DataError("horizon must be positive");
      if (plan) {
        const auto& hs = plan->horizons;
        if (std::find(hs.begin(), hs.end(), r.horizon) == hs.end()) throw DataError("horizon not in the plan");
        if (r.origin < plan->first_origin || r.origin + r.horizon > plan->last_data_year) {
          throw DataError("origin not in the plan for this horizon");
        }
        if (r.age < plan->age_lo || r.age > plan->age_hi) throw DataError("age not in the plan");
      }
      rows.push_back(std::move(r));
    } catch (const std::exception& e) {
      problems.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (plan && problems.empty()) {
    std::set<std::tuple<std::string, int, int, int>> have;
    std::set<std::pair<std::string, int>> groups;
    for (const SummaryRow& r : rows) {
      have.insert({r.model, r.horizon, r.origin, r.age});
      groups.insert({r.model, r.horizon});
    }
    for (const auto& [model, k] : groups) {
      for (int t : plan->origins(k)) {
        for (int age = plan->age_lo; age <= plan->age_hi; ++age) {
          if (!have.count({model, k, t, age})) {
            problems.push_back("missing " + model + " forecast for origin " + std::to_string(t) + ", horizon " +
                               std::to_string(k) + ", age " + std::to_string(age));
          }
        }
      }
    }
  }
  if (!problems.empty()) {
    std::ostringstream msg;
    msg << "external forecasts: " << problems.size() << " problem(s)";
    const std::size_t shown = std::min<std::size_t>(problems.size(), 20);
    for (std::size_t i = 0; i < shown; ++i) msg << "\n  " << problems[i];
    if (shown < problems.size()) msg << "\n  ...";
    throw DataError(msg.str());
  }
  return rows;
}

void write_score_csv(std::ostream& out, const ScoreTable& table) {
  out << "model,horizon,age,rounds,coverage,mean_width,interval_score,rmse\n";
  for (const ScoreRow& r : table.rows) {
    out << r.model << ',' << r.horizon << ',' << r.age << ',' << r.rounds << ',' << csv::format_double(r.coverage)
        << ',' << csv::format_double(r.mean_width) << ',' << csv::format_double(r.mean_score) << ','
        << csv::format_double(r.rmse) << '\n';
  }
  for (const ScoreAverage& a : table.averages) {
    out << a.model << ',' << a.horizon << ",all," << a.rounds << ',' << csv::format_double(a.coverage) << ','
        << csv::format_double(a.mean_width) << ',' << csv::format_double(a.mean_score) << ','
        << csv::format_double(a.rmse) << '\n';
  }
}

std::string score_json(const ScoreTable& table) {
  nlohmann::ordered_json j;
  j["level"] = table.level;
  nlohmann::ordered_json models = nlohmann::ordered_json::object();
  for (const ScoreAverage& a : table.averages) {
    models[a.model][std::to_string(a.horizon)] = {{"rounds", a.rounds},
                                                  {"coverage", a.coverage},
                                                  {"mean_width", a.mean_width},
                                                  {"interval_score", a.mean_score},
                                                  {"rmse", a.rmse}};
  }
  j["models"] = models;
  nlohmann::ordered_json failed = nlohmann::ordered_json::array();
  for (const FailedOrigin& f : table.failures) {
    failed.push_back({{"model", f.model}, {"origin", f.origin}, {"reason", f.reason}});
  }
  j["failed_origins"] = failed;
  return j.dump(2) + "\n";
}

}  // namespace mortfc::eval
