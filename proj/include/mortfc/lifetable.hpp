#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

namespace mortfc {

enum class Sex { female, male, total };

Sex parse_sex(std::string_view name);
std::string_view to_string(Sex sex);

enum class HmdKind { deaths, exposures };

/// Inclusive age/year window.
struct GridWindow {
  int age_lo = 0;
  int age_hi = 0;
  int year_lo = 0;
  int year_hi = 0;
};

/// Rectangular age x year table read from an HMD period 1x1 file for one sex.
/// Rows are ages (first_age upward), columns calendar years. Missing values are NaN.
struct HmdTable {
  int first_age = 0;
  int first_year = 0;
  Eigen::MatrixXd values;

  int last_age() const { return first_age + static_cast<int>(values.rows()) - 1; }
  int last_year() const { return first_year + static_cast<int>(values.cols()) - 1; }
};

/// Parse an HMD "Deaths" or "Exposure to risk" period table.
///
/// Header lines before the `Year Age Female Male Total` line are skipped. The
/// open age "110+" maps to 110. Every year must list the same ages. When a
/// window is given the result is restricted to it (ages above the window are
/// truncated, not aggregated) and a missing value inside the window is an
/// error naming the cell; without a window any missing value is an error.
HmdTable parse_hmd_table(std::istream& in, HmdKind kind, Sex sex,
                         const std::optional<GridWindow>& window = std::nullopt);

/// n = N + d/2 element-wise (mid-year exposure to initial exposed-to-risk).
HmdTable to_initial_exposure(const HmdTable& mid_year_exposure, const HmdTable& deaths);

/// Deaths and initial exposures on an age x year lattice.
///
/// Immutable after construction. Invariants checked on construction:
/// equal shapes, n > 0 and 0 <= d <= n in every cell.
class MortalityGrid {
 public:
  MortalityGrid(int first_age, int first_year, Eigen::MatrixXd deaths, Eigen::MatrixXd exposures,
                Sex sex = Sex::total);

  int first_age() const { return first_age_; }
  int last_age() const { return first_age_ + n_ages() - 1; }
  int first_year() const { return first_year_; }
  int last_year() const { return first_year_ + n_years() - 1; }
  int n_ages() const { return static_cast<int>(deaths_.rows()); }
  int n_years() const { return static_cast<int>(deaths_.cols()); }
  Sex sex() const { return sex_; }

  /// Rows are ages, columns years (column 0 is first_year).
  const Eigen::MatrixXd& deaths() const { return deaths_; }
  const Eigen::MatrixXd& exposures() const { return exposures_; }

  /// d / n per cell.
  Eigen::MatrixXd empirical_rates() const;

  /// Sub-grid copy over inclusive calendar ranges; column 0 of the result is year_lo.
  MortalityGrid window(const GridWindow& w) const;

  bool operator==(const MortalityGrid& other) const;

 private:
  int first_age_;
  int first_year_;
  Eigen::MatrixXd deaths_;
  Eigen::MatrixXd exposures_;
  Sex sex_;
};

/// Build a grid from HMD deaths and mid-year exposure tables over a window.
MortalityGrid grid_from_hmd(const HmdTable& deaths, const HmdTable& mid_year_exposure, Sex sex,
                            const std::optional<GridWindow>& window = std::nullopt);

/// Long-format store with header `age,year,deaths,exposure`.
void write_grid_csv(std::ostream& out, const MortalityGrid& grid);
MortalityGrid read_grid_csv(std::istream& in, Sex sex = Sex::total);

}  // namespace mortfc
