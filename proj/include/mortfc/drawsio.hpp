#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mortfc/forecast.hpp"
#include "mortfc/gmrf.hpp"
#include "mortfc/hpdyn.hpp"

namespace mortfc {

/// Long CSV `iter,block,name,value`. Metadata rows (block `diagnostics`,
/// iter 0) come first, then one group of rows per retained draw.
///
/// Dynamic HP blocks: psi (`A.1983`), mu (`A`), Sigma (lower triangle, `C.A`),
/// alpha (`A`). GMRF blocks: x (`age.year`), tau, rho_age, b.
void write_hp_draws_csv(std::ostream& out, const hp::HPPosterior& posterior);
void write_gmrf_draws_csv(std::ostream& out, const gmrf::GMRFPosterior& posterior);

struct LoadedDraws {
  ModelTag model = ModelTag::hp;
  std::optional<hp::HPPosterior> hp;
  std::optional<gmrf::GMRFPosterior> gmrf;
};

/// Throws DataError (with the line number) on malformed or incomplete files.
LoadedDraws read_draws_csv(std::istream& in);

struct ScalarTrace {
  std::string block;
  std::string name;
  std::vector<double> values;
};

/// Every sampled scalar as a series over retained draws, in file order.
std::vector<ScalarTrace> scalar_traces(const LoadedDraws& draws);

}  // namespace mortfc
