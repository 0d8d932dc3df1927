#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mortfc/evalharness.hpp"
#include "mortfc/gmrf.hpp"
#include "mortfc/hpdyn.hpp"
#include "mortfc/lifetable.hpp"

namespace mortfc::cli {

enum ExitCode : int { ok = 0, validation_error = 2, data_error = 3, numerical_error = 4 };

struct HPSettings {
  long iterations = 60000;
  long burnin = 20000;
  long thin = 10;
  double target_acceptance = 0.25;
  double initial_scale = 0.5;
  std::string proposal = "wls_informed";
  bool truncation_correction = false;
  int truncation_draws = 4096;
  int predict_sweeps = 10;
};

struct GMRFSettings {
  long iterations = 20000;
  long burnin = 5000;
  long thin = 10;
  double target_acceptance = 0.55;
  double rho_target_acceptance = 0.35;
};

/// Everything a run depends on. Loaded from a JSON file over the defaults;
/// command-line flags override file values.
struct RunConfig {
  std::string model = "gmrf";
  std::string data;
  Sex sex = Sex::female;
  /// Restrict the store to this window before fitting; unset means the whole store.
  std::optional<GridWindow> window;
  std::uint64_t seed = 1;
  HPSettings hp;
  GMRFSettings gmrf;
  int horizon = 21;
  double level = 0.95;
  std::vector<int> survival_years{1, 5, 10};
  eval::BacktestPlan backtest;
  std::string output = "out";

  /// Throws ValidationError on out-of-range settings.
  void validate() const;
};

std::string config_to_json(const RunConfig& config);
/// Unknown keys and wrong types are validation errors.
RunConfig config_from_json(const std::string& text, const RunConfig& base = {});

hp::HPChainConfig hp_chain_config(const RunConfig& config);
gmrf::GMRFChainConfig gmrf_chain_config(const RunConfig& config);

/// Model used by the backtest for config.model.
eval::SamplingModel sampling_model(const RunConfig& config);

/// Thread count from MORTFC_THREADS (0 when unset: use all cores).
unsigned thread_count_from_env();

/// Full command-line entry point. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mortfc::cli
