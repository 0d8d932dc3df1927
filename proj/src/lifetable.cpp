#include "mortfc/lifetable.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mortfc/csv.hpp"
#include "mortfc/errors.hpp"

namespace mortfc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view kind_name(HmdKind kind) { return kind == HmdKind::deaths ? "deaths" : "exposures"; }

std::string cell_name(int age, int year) {
  return "(age " + std::to_string(age) + ", year " + std::to_string(year) + ")";
}

}  // namespace

Sex parse_sex(std::string_view name) {
  if (name == "female" || name == "Female") return Sex::female;
  if (name == "male" || name == "Male") return Sex::male;
  if (name == "total" || name == "Total") return Sex::total;
  throw ValidationError("unknown sex '" + std::string(name) + "' (expected female, male or total)");
}

std::string_view to_string(Sex sex) {
  switch (sex) {
    case Sex::female: return "female";
    case Sex::male: return "male";
    case Sex::total: return "total";
  }
  return "total";
}

HmdTable parse_hmd_table(std::istream& in, HmdKind kind, Sex sex, const std::optional<GridWindow>& window) {
  const int column = sex == Sex::female ? 2 : sex == Sex::male ? 3 : 4;
  std::map<int, std::map<int, double>> rows;  // year -> age -> value
  std::string line;
  bool header_seen = false;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (!header_seen) {
      header_seen = tok.size() >= 5 && tok[0] == "Year" && tok[1] == "Age";
      continue;
    }
    if (tok.size() != 5) {
      throw DataError(std::string(kind_name(kind)) + " table line " + std::to_string(line_no) +
                      ": expected 5 columns");
    }
    const int year = static_cast<int>(csv::parse_long(tok[0]));
    std::string age_tok = tok[1];
    if (age_tok.ends_with('+')) age_tok.pop_back();
    const int age = static_cast<int>(csv::parse_long(age_tok));
    const std::string& v = tok[static_cast<std::size_t>(column)];
    const double value = v == "." ? kNaN : csv::parse_double(v);
    if (!rows[year].emplace(age, value).second) {
      throw DataError(std::string(kind_name(kind)) + " table: duplicate cell " + cell_name(age, year));
    }
  }
  if (!header_seen) throw DataError(std::string(kind_name(kind)) + " table: missing 'Year Age ...' header");
  if (rows.empty()) throw DataError(std::string(kind_name(kind)) + " table: no data rows");

  // Every year must carry the same age set.
  const auto& reference = rows.begin()->second;
  for (const auto& [year, ages] : rows) {
    bool same = ages.size() == reference.size();
    for (auto a = ages.begin(), r = reference.begin(); same && a != ages.end(); ++a, ++r) same = a->first == r->first;
    if (!same) {
      throw DataError(std::string(kind_name(kind)) + " table: ragged years, year " + std::to_string(year) +
                      " lists a different age set than year " + std::to_string(rows.begin()->first));
    }
  }
  const int first_age = reference.begin()->first;
  const int last_age = reference.rbegin()->first;
  const int first_year = rows.begin()->first;
  const int last_year = rows.rbegin()->first;
  if (static_cast<int>(reference.size()) != last_age - first_age + 1 ||
      static_cast<int>(rows.size()) != last_year - first_year + 1) {
    throw DataError(std::string(kind_name(kind)) + " table: ages or years are not contiguous");
  }

  GridWindow w = window.value_or(GridWindow{first_age, last_age, first_year, last_year});
  if (w.age_lo < first_age || w.age_hi > last_age || w.year_lo < first_year || w.year_hi > last_year ||
      w.age_lo > w.age_hi || w.year_lo > w.year_hi) {
    throw DataError(std::string(kind_name(kind)) + " table does not cover the requested window");
  }

  HmdTable out;
  out.first_age = w.age_lo;
  out.first_year = w.year_lo;
  out.values.resize(w.age_hi - w.age_lo + 1, w.year_hi - w.year_lo + 1);
  for (int year = w.year_lo; year <= w.year_hi; ++year) {
    const auto& ages = rows.at(year);
    for (int age = w.age_lo; age <= w.age_hi; ++age) {
      const double v = ages.at(age);
      if (std::isnan(v)) {
        throw DataError(std::string(kind_name(kind)) + " table: missing value at " + cell_name(age, year));
      }
      out.values(age - w.age_lo, year - w.year_lo) = v;
    }
  }
  return out;
}

HmdTable to_initial_exposure(const HmdTable& mid_year_exposure, const HmdTable& deaths) {
  if (mid_year_exposure.values.rows() != deaths.values.rows() ||
      mid_year_exposure.values.cols() != deaths.values.cols() ||
      mid_year_exposure.first_age != deaths.first_age || mid_year_exposure.first_year != deaths.first_year) {
    throw DataError("to_initial_exposure: exposure and deaths tables have different shapes");
  }
  HmdTable out = mid_year_exposure;
  out.values = mid_year_exposure.values + 0.5 * deaths.values;
  return out;
}

MortalityGrid::MortalityGrid(int first_age, int first_year, Eigen::MatrixXd deaths, Eigen::MatrixXd exposures,
                             Sex sex)
    : first_age_(first_age),
      first_year_(first_year),
      deaths_(std::move(deaths)),
      exposures_(std::move(exposures)),
      sex_(sex) {
  if (deaths_.rows() != exposures_.rows() || deaths_.cols() != exposures_.cols()) {
    throw DataError("MortalityGrid: deaths and exposures differ in shape");
  }
  if (deaths_.size() == 0) throw DataError("MortalityGrid: empty grid");
  for (Eigen::Index t = 0; t < deaths_.cols(); ++t) {
    for (Eigen::Index z = 0; z < deaths_.rows(); ++z) {
      const double d = deaths_(z, t);
      const double n = exposures_(z, t);
      const std::string cell = cell_name(first_age_ + static_cast<int>(z), first_year_ + static_cast<int>(t));
      if (!(n > 0.0) || !std::isfinite(n)) throw DataError("MortalityGrid: non-positive exposure at " + cell);
      if (!(d >= 0.0) || !(d <= n)) throw DataError("MortalityGrid: deaths outside [0, exposure] at " + cell);
    }
  }
}

Eigen::MatrixXd MortalityGrid::empirical_rates() const { return deaths_.cwiseQuotient(exposures_); }

MortalityGrid MortalityGrid::window(const GridWindow& w) const {
  if (w.age_lo > w.age_hi || w.year_lo > w.year_hi || w.age_lo < first_age() || w.age_hi > last_age() ||
      w.year_lo < first_year() || w.year_hi > last_year()) {
    throw ValidationError("window [" + std::to_string(w.age_lo) + "," + std::to_string(w.age_hi) + "] x [" +
                          std::to_string(w.year_lo) + "," + std::to_string(w.year_hi) +
                          "] exceeds the grid bounds");
  }
  const int r0 = w.age_lo - first_age_;
  const int c0 = w.year_lo - first_year_;
  const int nr = w.age_hi - w.age_lo + 1;
  const int nc = w.year_hi - w.year_lo + 1;
  return MortalityGrid(w.age_lo, w.year_lo, deaths_.block(r0, c0, nr, nc), exposures_.block(r0, c0, nr, nc),
                       sex_);
}

bool MortalityGrid::operator==(const MortalityGrid& other) const {
  return first_age_ == other.first_age_ && first_year_ == other.first_year_ && sex_ == other.sex_ &&
         deaths_.rows() == other.deaths_.rows() && deaths_.cols() == other.deaths_.cols() &&
         deaths_ == other.deaths_ && exposures_ == other.exposures_;
}

MortalityGrid grid_from_hmd(const HmdTable& deaths, const HmdTable& mid_year_exposure, Sex sex,
                            const std::optional<GridWindow>& window) {
  const HmdTable n = to_initial_exposure(mid_year_exposure, deaths);
  MortalityGrid grid(deaths.first_age, deaths.first_year, deaths.values, n.values, sex);
  return window ? grid.window(*window) : grid;
}

void write_grid_csv(std::ostream& out, const MortalityGrid& grid) {
  out << "age,year,deaths,exposure\n";
  for (int z = 0; z < grid.n_ages(); ++z) {
    for (int t = 0; t < grid.n_years(); ++t) {
      out << grid.first_age() + z << ',' << grid.first_year() + t << ',' << csv::format_double(grid.deaths()(z, t))
          << ',' << csv::format_double(grid.exposures()(z, t)) << '\n';
    }
  }
}

MortalityGrid read_grid_csv(std::istream& in, Sex sex) {
  std::string line;
  if (!std::getline(in, line) || csv::trim(line) != "age,year,deaths,exposure") {
    throw DataError("grid CSV: expected header 'age,year,deaths,exposure'");
  }
  std::map<std::pair<int, int>, std::pair<double, double>> cells;
  long line_no = 1;
  int age_lo = std::numeric_limits<int>::max(), age_hi = std::numeric_limits<int>::min();
  int year_lo = age_lo, year_hi = age_hi;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(csv::trim(line));
    if (f.size() != 4) throw DataError("grid CSV line " + std::to_string(line_no) + ": expected 4 fields");
    try {
      const int age = static_cast<int>(csv::parse_long(f[0]));
      const int year = static_cast<int>(csv::parse_long(f[1]));
      if (!cells.emplace(std::pair{age, year}, std::pair{csv::parse_double(f[2]), csv::parse_double(f[3])}).second) {
        throw DataError("duplicate cell " + cell_name(age, year));
      }
      age_lo = std::min(age_lo, age);
      age_hi = std::max(age_hi, age);
      year_lo = std::min(year_lo, year);
      year_hi = std::max(year_hi, year);
    } catch (const DataError& e) {
      throw DataError("grid CSV line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (cells.empty()) throw DataError("grid CSV: no data rows");
  const int na = age_hi - age_lo + 1;
  const int ny = year_hi - year_lo + 1;
  if (static_cast<long>(na) * ny != static_cast<long>(cells.size())) {
    throw DataError("grid CSV: cells do not form a complete age x year rectangle");
  }
  Eigen::MatrixXd d(na, ny), n(na, ny);
  for (const auto& [key, val] : cells) {
    d(key.first - age_lo, key.second - year_lo) = val.first;
    n(key.first - age_lo, key.second - year_lo) = val.second;
  }
  return MortalityGrid(age_lo, year_lo, std::move(d), std::move(n), sex);
}

}  // namespace mortfc
