#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <utility>
#include <vector>

namespace mortfc {

enum class ModelTag { hp, gmrf, external };

std::string_view to_string(ModelTag tag);
ModelTag parse_model_tag(std::string_view name);

/// Posterior-predictive death-probability samples for horizons 1..k.
///
/// samples[h-1] is an (ages x draws) matrix; column m of every horizon comes
/// from the same posterior draw, so cross-age products stay paired.
struct ForecastSet {
  ModelTag model = ModelTag::external;
  int first_age = 0;
  /// Last calendar year of the training window (T).
  int origin_year = 0;
  std::uint64_t seed = 0;
  std::vector<Eigen::MatrixXd> samples;

  int horizons() const { return static_cast<int>(samples.size()); }
  int n_ages() const { return samples.empty() ? 0 : static_cast<int>(samples.front().rows()); }
  int last_age() const { return first_age + n_ages() - 1; }
  int draws() const { return samples.empty() ? 0 : static_cast<int>(samples.front().cols()); }

  /// Draws of p for one age at horizon h (1-based).
  Eigen::VectorXd age_draws(int age, int horizon) const;
};

/// Quantile with linear interpolation between order statistics
/// (position (n-1) q on the sorted sample).
double quantile(std::vector<double> values, double q);

/// Equal-tailed interval at (1-level)/2 and 1-(1-level)/2; level 0 gives (median, median).
std::pair<double, double> predictive_interval(const ForecastSet& fs, int age, int horizon, double level);

double predictive_mean(const ForecastSet& fs, int age, int horizon);

/// Per-draw survival s_p = prod_{i<s} (1 - p_{age+i}). Throws ValidationError
/// when the age range runs past the last age in the set.
Eigen::VectorXd survival_curve(const ForecastSet& fs, int age, int years, int horizon);

/// Per-draw curtate expectation sum_{s=1}^{last_age-age} s_p. Survival beyond
/// the last age contributes nothing.
Eigen::VectorXd life_expectancy(const ForecastSet& fs, int age, int horizon);

/// `age,horizon,draw,p`
void write_forecast_draws_csv(std::ostream& out, const ForecastSet& fs);
ForecastSet read_forecast_draws_csv(std::istream& in, ModelTag tag = ModelTag::external);

/// `age,horizon,mean,lo<L>,hi<L>` with L the level in percent.
void write_forecast_summary_csv(std::ostream& out, const ForecastSet& fs, double level);

/// `age,horizon,s,draw,survival` for the given s values at every feasible age.
void write_survival_csv(std::ostream& out, const ForecastSet& fs, const std::vector<int>& years);

}  // namespace mortfc
