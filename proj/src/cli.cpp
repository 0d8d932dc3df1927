#include "mortfc/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "mortfc/csv.hpp"
#include "mortfc/drawsio.hpp"
#include "mortfc/errors.hpp"
#include "mortfc/samplers.hpp"

namespace mortfc::cli {

namespace {

using json = nlohmann::ordered_json;

json window_json(const std::optional<GridWindow>& w) {
  if (!w) return nullptr;
  return {{"age_lo", w->age_lo}, {"age_hi", w->age_hi}, {"year_lo", w->year_lo}, {"year_hi", w->year_hi}};
}

json to_json(const RunConfig& c) {
  json j;
  j["model"] = c.model;
  j["data"] = c.data;
  j["sex"] = std::string(to_string(c.sex));
  j["window"] = window_json(c.window);
  j["seed"] = c.seed;
  j["hp"] = {{"iterations", c.hp.iterations},
             {"burnin", c.hp.burnin},
             {"thin", c.hp.thin},
             {"target_acceptance", c.hp.target_acceptance},
             {"initial_scale", c.hp.initial_scale},
             {"proposal", c.hp.proposal},
             {"truncation_correction", c.hp.truncation_correction},
             {"truncation_draws", c.hp.truncation_draws},
             {"predict_sweeps", c.hp.predict_sweeps}};
  j["gmrf"] = {{"iterations", c.gmrf.iterations},
               {"burnin", c.gmrf.burnin},
               {"thin", c.gmrf.thin},
               {"target_acceptance", c.gmrf.target_acceptance},
               {"rho_target_acceptance", c.gmrf.rho_target_acceptance}};
  j["forecast"] = {{"horizon", c.horizon}, {"level", c.level}, {"survival_years", c.survival_years}};
  const auto& b = c.backtest;
  j["backtest"] = {{"window", b.window},         {"horizons", b.horizons}, {"first_origin", b.first_origin},
                   {"last_data_year", b.last_data_year}, {"age_lo", b.age_lo},     {"age_hi", b.age_hi},
                   {"level", b.level}};
  j["output"] = c.output;
  return j;
}

// Overlay `patch` onto `base`, rejecting keys that `base` does not have.
void overlay(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ValidationError("config: '" + where + "' must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ValidationError("config: unknown key '" + path + "'");
    json& slot = base[it.key()];
    if (slot.is_object() && it.key() != "window") {
      overlay(slot, it.value(), path);
    } else {
      slot = it.value();
    }
  }
}

template <typename T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config: '" + where + key + "' has the wrong type");
  }
}

RunConfig from_json(const json& j) {
  RunConfig c;
  c.model = get<std::string>(j, "model", "");
  c.data = get<std::string>(j, "data", "");
  c.sex = parse_sex(get<std::string>(j, "sex", ""));
  if (!j.at("window").is_null()) {
    const json& w = j.at("window");
    for (const char* key : {"age_lo", "age_hi", "year_lo", "year_hi"}) {
      if (!w.contains(key)) throw ValidationError(std::string("config: window needs '") + key + "'");
    }
    for (auto it = w.begin(); it != w.end(); ++it) {
      const std::string& k = it.key();
      if (k != "age_lo" && k != "age_hi" && k != "year_lo" && k != "year_hi") {
        throw ValidationError("config: unknown key 'window." + k + "'");
      }
    }
    c.window = GridWindow{get<int>(w, "age_lo", "window."), get<int>(w, "age_hi", "window."),
                          get<int>(w, "year_lo", "window."), get<int>(w, "year_hi", "window.")};
  }
  c.seed = get<std::uint64_t>(j, "seed", "");
  const json& h = j.at("hp");
  c.hp.iterations = get<long>(h, "iterations", "hp.");
  c.hp.burnin = get<long>(h, "burnin", "hp.");
  c.hp.thin = get<long>(h, "thin", "hp.");
  c.hp.target_acceptance = get<double>(h, "target_acceptance", "hp.");
  c.hp.initial_scale = get<double>(h, "initial_scale", "hp.");
  c.hp.proposal = get<std::string>(h, "proposal", "hp.");
  c.hp.truncation_correction = get<bool>(h, "truncation_correction", "hp.");
  c.hp.truncation_draws = get<int>(h, "truncation_draws", "hp.");
  c.hp.predict_sweeps = get<int>(h, "predict_sweeps", "hp.");
  const json& g = j.at("gmrf");
  c.gmrf.iterations = get<long>(g, "iterations", "gmrf.");
  c.gmrf.burnin = get<long>(g, "burnin", "gmrf.");
  c.gmrf.thin = get<long>(g, "thin", "gmrf.");
  c.gmrf.target_acceptance = get<double>(g, "target_acceptance", "gmrf.");
  c.gmrf.rho_target_acceptance = get<double>(g, "rho_target_acceptance", "gmrf.");
  const json& f = j.at("forecast");
  c.horizon = get<int>(f, "horizon", "forecast.");
  c.level = get<double>(f, "level", "forecast.");
  c.survival_years = get<std::vector<int>>(f, "survival_years", "forecast.");
  const json& b = j.at("backtest");
  c.backtest.window = get<int>(b, "window", "backtest.");
  c.backtest.horizons = get<std::vector<int>>(b, "horizons", "backtest.");
  c.backtest.first_origin = get<int>(b, "first_origin", "backtest.");
  c.backtest.last_data_year = get<int>(b, "last_data_year", "backtest.");
  c.backtest.age_lo = get<int>(b, "age_lo", "backtest.");
  c.backtest.age_hi = get<int>(b, "age_hi", "backtest.");
  c.backtest.level = get<double>(b, "level", "backtest.");
  c.output = get<std::string>(j, "output", "");
  return c;
}

void check_chain(long iterations, long burnin, long thin, const char* name) {
  if (iterations < 1 || burnin < 0 || thin < 1 || burnin >= iterations) {
    throw ValidationError(std::string(name) + ": need iterations > burnin >= 0 and thin >= 1");
  }
}

std::pair<int, int> parse_range(const std::string& text, const char* what) {
  const auto dash = text.find('-', 1);
  try {
    if (dash == std::string::npos) {
      const int v = static_cast<int>(csv::parse_long(text));
      return {v, v};
    }
    return {static_cast<int>(csv::parse_long(std::string_view(text).substr(0, dash))),
            static_cast<int>(csv::parse_long(std::string_view(text).substr(dash + 1)))};
  } catch (const DataError&) {
    throw ValidationError(std::string(what) + " must look like LO-HI, got '" + text + "'");
  }
}

MortalityGrid load_store(const RunConfig& c) {
  if (c.data.empty()) throw ValidationError("no data store given (--data or config 'data')");
  std::istringstream in(csv::read_file(c.data));
  MortalityGrid grid = read_grid_csv(in, c.sex);
  if (!c.window) return grid;
  const GridWindow& w = *c.window;
  if (w.age_lo < grid.first_age() || w.age_hi > grid.last_age() || w.year_lo < grid.first_year() ||
      w.year_hi > grid.last_year()) {
    throw ValidationError("window ages " + std::to_string(w.age_lo) + "-" + std::to_string(w.age_hi) + ", years " +
                          std::to_string(w.year_lo) + "-" + std::to_string(w.year_hi) +
                          " exceeds the store (ages " + std::to_string(grid.first_age()) + "-" +
                          std::to_string(grid.last_age()) + ", years " + std::to_string(grid.first_year()) + "-" +
                          std::to_string(grid.last_year()) + ")");
  }
  return grid.window(w);
}

std::string path_in(const std::string& dir, const char* name) {
  return (std::filesystem::path(dir) / name).string();
}

json ess_json(const std::vector<ScalarTrace>& traces, json& degenerate) {
  json ess = json::object();
  for (const ScalarTrace& tr : traces) {
    const auto e = samplers::ess(tr.values);
    ess[tr.block][tr.name] = e.ess;
    if (e.degenerate) degenerate.push_back(tr.block + ":" + tr.name);
  }
  return ess;
}

// Options shared by the commands that read a config file.
struct CommonFlags {
  std::string config_path;
  std::optional<std::string> model, data, sex, ages, years, output;
  std::optional<std::uint64_t> seed;
  std::optional<long> iterations, burnin, thin;

  void add(CLI::App* app) {
    app->add_option("-c,--config", config_path, "JSON run configuration");
    app->add_option("--model", model, "hp or gmrf");
    app->add_option("--data", data, "long-format grid store");
    app->add_option("--sex", sex, "female, male or total");
    app->add_option("--ages", ages, "age window LO-HI");
    app->add_option("--years", years, "year window LO-HI");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--iterations", iterations, "MCMC iterations");
    app->add_option("--burnin", burnin, "burn-in iterations");
    app->add_option("--thin", thin, "thinning interval");
    app->add_option("-o,--out", output, "output directory");
  }

  RunConfig resolve() const {
    RunConfig c;
    if (!config_path.empty()) c = config_from_json(csv::read_file(config_path));
    if (model) c.model = *model;
    if (data) c.data = *data;
    if (sex) c.sex = parse_sex(*sex);
    if (ages || years) {
      GridWindow w = c.window.value_or(GridWindow{0, 0, 0, 0});
      if (!c.window && (!ages || !years)) {
        throw ValidationError("--ages and --years must both be given when the config has no window");
      }
      if (ages) std::tie(w.age_lo, w.age_hi) = parse_range(*ages, "--ages");
      if (years) std::tie(w.year_lo, w.year_hi) = parse_range(*years, "--years");
      c.window = w;
    }
    if (seed) c.seed = *seed;
    // Chain flags apply to the selected model only.
    if (c.model == "hp") {
      if (iterations) c.hp.iterations = *iterations;
      if (burnin) c.hp.burnin = *burnin;
      if (thin) c.hp.thin = *thin;
    } else if (c.model == "gmrf") {
      if (iterations) c.gmrf.iterations = *iterations;
      if (burnin) c.gmrf.burnin = *burnin;
      if (thin) c.gmrf.thin = *thin;
    }
    if (output) c.output = *output;
    c.validate();
    return c;
  }
};

int cmd_import(const std::string& deaths, const std::string& exposures, const std::string& sex_name,
               const std::optional<std::string>& ages, const std::optional<std::string>& years,
               const std::string& out_path, std::ostream& out) {
  const Sex sex = parse_sex(sex_name);
  std::optional<GridWindow> window;
  std::istringstream din(csv::read_file(deaths));
  std::istringstream ein(csv::read_file(exposures));
  if (ages || years) {
    if (!ages || !years) throw ValidationError("--ages and --years must be given together");
    GridWindow w;
    std::tie(w.age_lo, w.age_hi) = parse_range(*ages, "--ages");
    std::tie(w.year_lo, w.year_hi) = parse_range(*years, "--years");
    window = w;
  }
  const HmdTable d = parse_hmd_table(din, HmdKind::deaths, sex, window);
  const HmdTable e = parse_hmd_table(ein, HmdKind::exposures, sex, window);
  const MortalityGrid grid = grid_from_hmd(d, e, sex);
  std::ostringstream csv_out;
  write_grid_csv(csv_out, grid);
  csv::write_file_atomic(out_path, csv_out.str());
  out << "imported ages " << grid.first_age() << "-" << grid.last_age() << ", years " << grid.first_year() << "-"
      << grid.last_year() << " -> " << out_path << "\n";
  return ok;
}

int cmd_fit(const RunConfig& c, std::ostream& out) {
  const MortalityGrid grid = load_store(c);
  const auto start = std::chrono::steady_clock::now();
  std::ostringstream draws;
  json diag;
  diag["model"] = c.model;
  diag["seed"] = c.seed;
  diag["first_age"] = grid.first_age();
  diag["last_age"] = grid.last_age();
  diag["first_year"] = grid.first_year();
  diag["last_year"] = grid.last_year();
  LoadedDraws loaded;
  if (c.model == "hp") {
    const hp::HPPosterior post = hp::run_chain(grid, hp_chain_config(c));
    write_hp_draws_csv(draws, post);
    diag["iterations"] = c.hp.iterations;
    diag["burnin"] = c.hp.burnin;
    diag["thin"] = c.hp.thin;
    diag["retained_draws"] = post.draws.size();
    json acc = json::object(), scale = json::object();
    for (std::size_t t = 0; t < post.acceptance.size(); ++t) {
      const std::string y = std::to_string(post.first_year + static_cast<int>(t));
      acc["psi"][y] = post.acceptance[t];
      scale[y] = post.scales[t];
    }
    acc["hyper"] = post.hyper_acceptance;
    diag["acceptance"] = acc;
    diag["tuning"] = {{"c_t", scale}};
    diag["borrowed_seeds"] = post.borrowed_seeds;
    loaded.model = ModelTag::hp;
    loaded.hp = post;
  } else {
    const gmrf::GMRFPosterior post = gmrf::run_chain_gmrf(grid, gmrf_chain_config(c));
    write_gmrf_draws_csv(draws, post);
    diag["iterations"] = c.gmrf.iterations;
    diag["burnin"] = c.gmrf.burnin;
    diag["thin"] = c.gmrf.thin;
    diag["retained_draws"] = post.draws.size();
    diag["acceptance"] = {{"x", post.acceptance}, {"rho_age", post.rho_acceptance}};
    diag["tuning"] = {{"delta", post.delta}, {"rho_step", post.rho_step}};
    loaded.model = ModelTag::gmrf;
    loaded.gmrf = post;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json degenerate = json::array();
  diag["ess"] = ess_json(scalar_traces(loaded), degenerate);
  diag["degenerate_series"] = degenerate;
  diag["wall_time_seconds"] = wall;

  csv::write_file_atomic(path_in(c.output, "draws.csv"), draws.str());
  csv::write_file_atomic(path_in(c.output, "diagnostics.json"), diag.dump(2) + "\n");
  out << "fit " << c.model << " on ages " << grid.first_age() << "-" << grid.last_age() << ", years "
      << grid.first_year() << "-" << grid.last_year() << " in " << wall << " s -> " << c.output << "\n";
  return ok;
}

int cmd_forecast(const std::string& draws_path, int horizon, double level, std::optional<std::uint64_t> seed,
                 const std::vector<int>& survival_years, int predict_sweeps, const std::string& out_dir,
                 std::ostream& out) {
  if (horizon < 1) throw ValidationError("forecast horizon must be at least 1");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("interval level must lie in (0,1)");
  for (int s : survival_years) {
    if (s < 1) throw ValidationError("survival years must be positive");
  }
  std::istringstream in(csv::read_file(draws_path));
  const LoadedDraws loaded = read_draws_csv(in);
  ForecastSet fs;
  if (loaded.hp) {
    Rng rng(seed.value_or(loaded.hp->seed), 1);
    fs = hp::predict_forward(*loaded.hp, horizon, rng, predict_sweeps);
  } else {
    Rng rng(seed.value_or(loaded.gmrf->seed), 1);
    fs = gmrf::predict_gmrf(*loaded.gmrf, horizon, rng);
  }
  std::ostringstream draws, summary, survival;
  write_forecast_draws_csv(draws, fs);
  write_forecast_summary_csv(summary, fs, level);
  write_survival_csv(survival, fs, survival_years);
  csv::write_file_atomic(path_in(out_dir, "forecast_draws.csv"), draws.str());
  csv::write_file_atomic(path_in(out_dir, "forecast_summary.csv"), summary.str());
  csv::write_file_atomic(path_in(out_dir, "survival.csv"), survival.str());
  out << "forecast " << to_string(fs.model) << " from " << fs.origin_year << ", horizons 1-" << horizon << ", "
      << fs.draws() << " draws -> " << out_dir << "\n";
  return ok;
}

int cmd_backtest(const RunConfig& c, const std::optional<std::string>& external, std::ostream& out) {
  if (c.data.empty()) throw ValidationError("no data store given (--data or config 'data')");
  std::istringstream in(csv::read_file(c.data));
  const MortalityGrid grid = read_grid_csv(in, c.sex);
  c.backtest.validate(grid);
  eval::ScoreTable table;
  std::ostringstream summaries;
  if (external) {
    std::istringstream ext(csv::read_file(*external));
    const auto rows = eval::ingest_external_forecasts(ext, &c.backtest);
    table = eval::score_summaries(rows, grid, c.backtest.level);
    eval::write_summaries_csv(summaries, rows);
  } else {
    const auto model = eval::from_sampler(sampling_model(c), c.backtest.level);
    eval::BacktestPlan plan = c.backtest;
    plan.seed = c.seed;
    const auto result = eval::run_backtest(grid, plan, c.model, model, thread_count_from_env());
    table = result.table;
    eval::write_summaries_csv(summaries, result.summaries);
  }
  std::ostringstream scores;
  eval::write_score_csv(scores, table);
  csv::write_file_atomic(path_in(c.output, "summaries.csv"), summaries.str());
  csv::write_file_atomic(path_in(c.output, "scores.csv"), scores.str());
  csv::write_file_atomic(path_in(c.output, "scores.json"), eval::score_json(table));
  for (const auto& a : table.averages) {
    out << a.model << " k=" << a.horizon << " rounds=" << a.rounds << " coverage=" << a.coverage
        << " width=" << a.mean_width << " score=" << a.mean_score << " rmse=" << a.rmse << "\n";
  }
  for (const auto& f : table.failures) out << "failed origin " << f.origin << ": " << f.reason << "\n";
  return ok;
}

int cmd_diag(const std::string& draws_path, const std::optional<std::string>& out_path, std::ostream& out) {
  std::istringstream in(csv::read_file(draws_path));
  const LoadedDraws loaded = read_draws_csv(in);
  std::ostringstream table;
  table << "block,name,ess,draws,degenerate\n";
  for (const ScalarTrace& tr : scalar_traces(loaded)) {
    const auto e = samplers::ess(tr.values);
    table << tr.block << ',' << tr.name << ',' << csv::format_double(e.ess) << ',' << tr.values.size() << ','
          << (e.degenerate ? 1 : 0) << '\n';
  }
  if (out_path) {
    csv::write_file_atomic(*out_path, table.str());
  } else {
    out << table.str();
  }
  return ok;
}

}  // namespace

void RunConfig::validate() const {
  if (model != "hp" && model != "gmrf") throw ValidationError("model must be hp or gmrf, got '" + model + "'");
  if (window && (window->age_lo > window->age_hi || window->year_lo > window->year_hi)) {
    throw ValidationError("window ranges must be nonempty");
  }
  check_chain(hp.iterations, hp.burnin, hp.thin, "hp");
  check_chain(gmrf.iterations, gmrf.burnin, gmrf.thin, "gmrf");
  for (double a : {hp.target_acceptance, gmrf.target_acceptance, gmrf.rho_target_acceptance}) {
    if (!(a > 0.0 && a < 1.0)) throw ValidationError("acceptance targets must lie in (0,1)");
  }
  if (!(hp.initial_scale > 0.0)) throw ValidationError("hp.initial_scale must be positive");
  if (hp.proposal != "wls_informed" && hp.proposal != "isotropic") {
    throw ValidationError("hp.proposal must be wls_informed or isotropic");
  }
  if (hp.truncation_draws < 1) throw ValidationError("hp.truncation_draws must be positive");
  if (hp.predict_sweeps < 1) throw ValidationError("hp.predict_sweeps must be positive");
  if (horizon < 1) throw ValidationError("forecast.horizon must be at least 1");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("forecast.level must lie in (0,1)");
  for (int s : survival_years) {
    if (s < 1) throw ValidationError("forecast.survival_years must be positive");
  }
  if (backtest.window < 1 || backtest.horizons.empty() || backtest.age_lo > backtest.age_hi ||
      !(backtest.level > 0.0 && backtest.level < 1.0)) {
    throw ValidationError("backtest plan is malformed");
  }
  for (int k : backtest.horizons) {
    if (k < 1) throw ValidationError("backtest horizons must be positive");
  }
}

std::string config_to_json(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

RunConfig config_from_json(const std::string& text, const RunConfig& base) {
  json patch;
  try {
    patch = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  json merged = to_json(base);
  overlay(merged, patch, "");
  RunConfig c = from_json(merged);
  c.validate();
  return c;
}

hp::HPChainConfig hp_chain_config(const RunConfig& c) {
  hp::HPChainConfig h;
  h.iterations = c.hp.iterations;
  h.burnin = c.hp.burnin;
  h.thin = c.hp.thin;
  h.seed = c.seed;
  h.target_acceptance = c.hp.target_acceptance;
  h.initial_scale = c.hp.initial_scale;
  h.style = c.hp.proposal == "isotropic" ? hp::ProposalStyle::isotropic : hp::ProposalStyle::wls_informed;
  h.truncation_correction = c.hp.truncation_correction;
  h.truncation_draws = c.hp.truncation_draws;
  return h;
}

gmrf::GMRFChainConfig gmrf_chain_config(const RunConfig& c) {
  gmrf::GMRFChainConfig g;
  g.iterations = c.gmrf.iterations;
  g.burnin = c.gmrf.burnin;
  g.thin = c.gmrf.thin;
  g.seed = c.seed;
  g.target_acceptance = c.gmrf.target_acceptance;
  g.rho_target_acceptance = c.gmrf.rho_target_acceptance;
  return g;
}

eval::SamplingModel sampling_model(const RunConfig& config) {
  if (config.model == "hp") {
    return [config](const MortalityGrid& train, int k, std::uint64_t seed) {
      hp::HPChainConfig h = hp_chain_config(config);
      h.seed = seed;
      const hp::HPPosterior post = hp::run_chain(train, h);
      Rng rng(seed, 1);
      return hp::predict_forward(post, k, rng, config.hp.predict_sweeps);
    };
  }
  return [config](const MortalityGrid& train, int k, std::uint64_t seed) {
    gmrf::GMRFChainConfig g = gmrf_chain_config(config);
    g.seed = seed;
    const gmrf::GMRFPosterior post = gmrf::run_chain_gmrf(train, g);
    Rng rng(seed, 1);
    return gmrf::predict_gmrf(post, k, rng);
  };
}

unsigned thread_count_from_env() {
  const char* v = std::getenv("MORTFC_THREADS");
  if (!v || !*v) return 0;
  try {
    const long n = csv::parse_long(v);
    if (n < 1) throw ValidationError("MORTFC_THREADS must be a positive integer");
    return static_cast<unsigned>(n);
  } catch (const DataError&) {
    throw ValidationError("MORTFC_THREADS must be a positive integer");
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian mortality forecasting: dynamic Heligman-Pollard and GMRF models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "mortfc 1.0.0");

  std::string deaths, exposures, import_sex = "female", import_out;
  std::optional<std::string> import_ages, import_years;
  auto* imp = app.add_subcommand("import", "Convert HMD deaths/exposure files into a grid store");
  imp->add_option("--deaths", deaths, "HMD Deaths_1x1 file")->required();
  imp->add_option("--exposures", exposures, "HMD Exposures_1x1 file")->required();
  imp->add_option("--sex", import_sex, "female, male or total");
  imp->add_option("--ages", import_ages, "age window LO-HI");
  imp->add_option("--years", import_years, "year window LO-HI");
  imp->add_option("-o,--out", import_out, "output store CSV")->required();

  CommonFlags fit_flags;
  auto* fit = app.add_subcommand("fit", "Run the MCMC sampler and write draws plus diagnostics");
  fit_flags.add(fit);

  std::string fc_draws, fc_out = "out";
  int fc_horizon = 0;
  double fc_level = 0.95;
  int fc_sweeps = 10;
  std::optional<std::uint64_t> fc_seed;
  std::vector<int> fc_survival{1, 5, 10};
  auto* fc = app.add_subcommand("forecast", "Posterior-predictive forecasts from a draws file");
  fc->add_option("--draws", fc_draws, "draws CSV written by fit")->required();
  fc->add_option("-k,--horizon", fc_horizon, "forecast horizon in years")->required();
  fc->add_option("--level", fc_level, "interval level");
  fc->add_option("--seed", fc_seed, "seed for predictive simulation (default: the fit seed)");
  fc->add_option("--survival", fc_survival, "survival spans s")->delimiter(',');
  fc->add_option("--sweeps", fc_sweeps, "Gibbs sweeps per truncated-normal draw (hp)");
  fc->add_option("-o,--out", fc_out, "output directory");

  CommonFlags bt_flags;
  std::optional<std::string> bt_external;
  auto* bt = app.add_subcommand("backtest", "Rolling-origin backtest and scoring");
  bt_flags.add(bt);
  bt->add_option("--external", bt_external, "score forecasts from CSV model,origin,horizon,age,mean,lo,hi");

  std::string diag_draws;
  std::optional<std::string> diag_out;
  auto* dg = app.add_subcommand("diag", "Effective sample sizes for every scalar in a draws file");
  dg->add_option("--draws", diag_draws, "draws CSV")->required();
  dg->add_option("-o,--out", diag_out, "write the ESS table here instead of stdout");

  auto* cfg = app.add_subcommand("config", "Configuration utilities");
  cfg->require_subcommand(1);
  std::string show_path;
  auto* show = cfg->add_subcommand("show", "Print the effective configuration with all defaults");
  show->add_option("-c,--config", show_path, "JSON run configuration to merge over the defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : validation_error;
  }

  try {
    if (*imp) return cmd_import(deaths, exposures, import_sex, import_ages, import_years, import_out, out);
    if (*fit) return cmd_fit(fit_flags.resolve(), out);
    if (*fc) return cmd_forecast(fc_draws, fc_horizon, fc_level, fc_seed, fc_survival, fc_sweeps, fc_out, out);
    if (*bt) return cmd_backtest(bt_flags.resolve(), bt_external, out);
    if (*dg) return cmd_diag(diag_draws, diag_out, out);
    if (*show) {
      const RunConfig c = show_path.empty() ? RunConfig{} : config_from_json(csv::read_file(show_path));
      out << config_to_json(c);
      return ok;
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return validation_error;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return data_error;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return numerical_error;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return data_error;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << "\n";
    return numerical_error;
  }
  return ok;
}

}  // namespace mortfc::cli
