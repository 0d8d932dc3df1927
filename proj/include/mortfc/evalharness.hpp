#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mortfc/forecast.hpp"
#include "mortfc/lifetable.hpp"

namespace mortfc::eval {

/// (hi - lo) + (2/alpha)(lo - obs)[obs < lo] + (2/alpha)(obs - hi)[obs > hi],
/// alpha = 1 - level. The closed interval counts as covered.
double interval_score(double lo, double hi, double obs, double level);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct CoverageWidth {
  double coverage = 0.0;
  double mean_width = 0.0;
};

CoverageWidth coverage_and_width(std::span<const Interval> intervals, std::span<const double> observed);

double rmse(std::span<const double> predicted, std::span<const double> observed);

/// Rolling-origin plan. Origins run first_origin..last_data_year - k for each
/// horizon k; each fit uses the W years ending at the origin.
struct BacktestPlan {
  int window = 10;
  std::vector<int> horizons{5, 15};
  int first_origin = 1989;
  int last_data_year = 2013;
  int age_lo = 0;
  int age_hi = 89;
  double level = 0.95;
  std::uint64_t seed = 1;

  std::vector<int> origins(int horizon) const;
  /// Every origin used by at least one horizon, ascending.
  std::vector<int> all_origins() const;
  int max_horizon_for(int origin) const;
  /// Throws ValidationError on a malformed plan, DataError when the grid
  /// does not cover every training window and target year.
  void validate(const MortalityGrid& grid) const;
};

/// One forecast summary; `origin` is the last training year.
struct SummaryRow {
  std::string model;
  int origin = 0;
  int horizon = 0;
  int age = 0;
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct PointForecast {
  int horizon = 0;
  int age = 0;
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Fit on a training grid and return summaries for horizons 1..max_horizon.
using ForecastModel =
    std::function<std::vector<PointForecast>(const MortalityGrid& train, int max_horizon, std::uint64_t seed)>;

/// Model returning posterior-predictive samples.
using SamplingModel = std::function<ForecastSet(const MortalityGrid& train, int max_horizon, std::uint64_t seed)>;

/// Wrap a sampling model: means and equal-tailed intervals at `level`.
ForecastModel from_sampler(SamplingModel model, double level);

/// Perfect-foresight model: mean = observed d/n of the target year, interval +/- eps.
ForecastModel oracle_model(const MortalityGrid& full, double eps);

struct ScoreRow {
  std::string model;
  int horizon = 0;
  int age = 0;
  long rounds = 0;
  double coverage = 0.0;
  double mean_width = 0.0;
  double mean_score = 0.0;
  double rmse = 0.0;
};

/// Over-age averages of the per-age rows.
struct ScoreAverage {
  std::string model;
  int horizon = 0;
  long rounds = 0;
  double coverage = 0.0;
  double mean_width = 0.0;
  double mean_score = 0.0;
  double rmse = 0.0;
};

struct FailedOrigin {
  std::string model;
  int origin = 0;
  std::string reason;
};

struct ScoreTable {
  double level = 0.95;
  std::vector<ScoreRow> rows;
  std::vector<ScoreAverage> averages;
  std::vector<FailedOrigin> failures;
};

/// Score summaries against observed d/n of year origin + horizon. Rows are
/// grouped by (model, horizon, age); every group must cover the same set of
/// origins across ages.
ScoreTable score_summaries(const std::vector<SummaryRow>& summaries, const MortalityGrid& grid, double level);

struct BacktestResult {
  std::vector<SummaryRow> summaries;
  ScoreTable table;
};

/// Seed handed to the model for one origin.
std::uint64_t origin_seed(std::uint64_t base, int origin);

/// Fit once per origin (at the largest horizon it needs), forecast, and score.
/// Origins run on up to `threads` workers (0: hardware concurrency); results do
/// not depend on the thread count. A failed fit excludes that origin and is
/// listed in table.failures.
BacktestResult run_backtest(const MortalityGrid& grid, const BacktestPlan& plan, const std::string& model_name,
                            const ForecastModel& model, unsigned threads = 0);

/// `model,origin,horizon,age,mean,lo,hi`
void write_summaries_csv(std::ostream& out, const std::vector<SummaryRow>& rows);

/// Parse external summaries. Malformed rows raise a DataError that lists every
/// offending line number. When a plan is given, rows off the plan are errors and
/// plan coordinates missing for a (model, horizon) present in the file are reported.
std::vector<SummaryRow> ingest_external_forecasts(std::istream& in, const BacktestPlan* plan = nullptr);

/// `model,horizon,age,rounds,coverage,mean_width,interval_score,rmse`; averages use age `all`.
void write_score_csv(std::ostream& out, const ScoreTable& table);
/// Measures per model and horizon, plus failed origins.
std::string score_json(const ScoreTable& table);

}  // namespace mortfc::eval
