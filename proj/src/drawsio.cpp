#include "mortfc/drawsio.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <string_view>

#include "mortfc/csv.hpp"
#include "mortfc/errors.hpp"

namespace mortfc {

namespace {

constexpr std::string_view kLetters = "ABCDEFGH";

std::string letter(int i) { return std::string(1, kLetters[static_cast<std::size_t>(i)]); }

int letter_index(std::string_view s) {
  if (s.size() != 1) return -1;
  const auto pos = kLetters.find(s.front());
  return pos == std::string_view::npos ? -1 : static_cast<int>(pos);
}

class RowWriter {
 public:
  explicit RowWriter(std::ostream& out) : out_(out) { out_ << "iter,block,name,value\n"; }
  void row(long iter, std::string_view block, std::string_view name, double v) {
    out_ << iter << ',' << block << ',' << name << ',' << csv::format_double(v) << '\n';
  }
  void raw(long iter, std::string_view block, std::string_view name, std::string_view v) {
    out_ << iter << ',' << block << ',' << name << ',' << v << '\n';
  }

 private:
  std::ostream& out_;
};

std::uint64_t parse_u64(std::string_view s) {
  s = csv::trim(s);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw DataError("not an unsigned integer: '" + std::string(s) + "'");
  }
  return v;
}

struct Row {
  long line = 0;
  long iter = 0;
  std::string block;
  std::string name;
  std::string value;
};

[[noreturn]] void fail(const Row& r, const std::string& what) {
  throw DataError("draws file line " + std::to_string(r.line) + ": " + what);
}

std::pair<std::string_view, std::string_view> split_dot(std::string_view name) {
  const auto dot = name.find('.');
  if (dot == std::string_view::npos) return {name, {}};
  return {name.substr(0, dot), name.substr(dot + 1)};
}

int diag_int(const std::map<std::string, Row>& meta, const std::string& key) {
  const auto it = meta.find(key);
  if (it == meta.end()) throw DataError("draws file: missing diagnostics entry '" + key + "'");
  try {
    return static_cast<int>(csv::parse_long(it->second.value));
  } catch (const DataError& e) {
    fail(it->second, e.what());
  }
}

double diag_double(const std::map<std::string, Row>& meta, const std::string& key, double fallback) {
  const auto it = meta.find(key);
  if (it == meta.end()) return fallback;
  try {
    return csv::parse_double(it->second.value);
  } catch (const DataError& e) {
    fail(it->second, e.what());
  }
}

std::uint64_t diag_seed(const std::map<std::string, Row>& meta) {
  const auto it = meta.find("seed");
  if (it == meta.end()) throw DataError("draws file: missing diagnostics entry 'seed'");
  try {
    return parse_u64(it->second.value);
  } catch (const DataError& e) {
    fail(it->second, e.what());
  }
}

hp::HPPosterior read_hp(const std::map<std::string, Row>& meta, const std::vector<Row>& rows) {
  hp::HPPosterior post;
  post.first_age = diag_int(meta, "first_age");
  post.n_ages = diag_int(meta, "n_ages");
  post.first_year = diag_int(meta, "first_year");
  post.n_years = diag_int(meta, "n_years");
  post.seed = diag_seed(meta);
  if (post.n_years < 1 || post.n_ages < 1) throw DataError("draws file: empty grid shape");
  for (int i = 0; i < hp::kDim; ++i) {
    post.box.lower[i] = diag_double(meta, "eta." + letter(i), -INFINITY);
    post.box.upper[i] = diag_double(meta, "xi." + letter(i), INFINITY);
  }
  for (int t = 0; t < post.n_years; ++t) {
    const std::string y = std::to_string(post.first_year + t);
    post.acceptance.push_back(diag_double(meta, "acceptance." + y, 0.0));
    post.scales.push_back(diag_double(meta, "scale." + y, 0.0));
    if (meta.count("borrowed." + y)) post.borrowed_seeds.push_back(post.first_year + t);
  }
  post.hyper_acceptance = diag_double(meta, "hyper_acceptance", 1.0);

  const std::size_t expected = static_cast<std::size_t>(post.n_years) * hp::kDim + hp::kDim + 36 + hp::kDim;
  std::map<long, std::size_t> index;
  std::vector<std::size_t> counts;
  for (const Row& r : rows) {
    auto [it, fresh] = index.try_emplace(r.iter, post.draws.size());
    if (fresh) {
      if (!post.draws.empty() && r.iter < post.draws.back().iteration) fail(r, "iterations out of order");
      hp::HPDraw d;
      d.iteration = r.iter;
      d.path.assign(static_cast<std::size_t>(post.n_years), hp::HPVector::Zero());
      d.hyper.drift.setZero();
      d.hyper.innovation.setZero();
      d.hyper.aux.setZero();
      post.draws.push_back(std::move(d));
      counts.push_back(0);
    }
    hp::HPDraw& d = post.draws[it->second];
    double v = 0.0;
    try {
      v = csv::parse_double(r.value);
    } catch (const DataError& e) {
      fail(r, e.what());
    }
    const auto [a, b] = split_dot(r.name);
    const int i = letter_index(a);
    if (i < 0) fail(r, "unknown parameter '" + r.name + "'");
    if (r.block == "psi") {
      long year = 0;
      try {
        year = csv::parse_long(b);
      } catch (const DataError&) {
        fail(r, "bad psi name '" + r.name + "'");
      }
      const long t = year - post.first_year;
      if (t < 0 || t >= post.n_years) fail(r, "psi year outside the fitted window");
      d.path[static_cast<std::size_t>(t)][i] = v;
    } else if (r.block == "mu") {
      d.hyper.drift[i] = v;
    } else if (r.block == "alpha") {
      d.hyper.aux[i] = v;
    } else if (r.block == "Sigma") {
      const int j = letter_index(b);
      if (j < 0 || j > i) fail(r, "bad Sigma entry '" + r.name + "'");
      d.hyper.innovation(i, j) = v;
      d.hyper.innovation(j, i) = v;
    } else {
      fail(r, "unknown block '" + r.block + "'");
    }
    ++counts[it->second];
  }
  for (std::size_t m = 0; m < counts.size(); ++m) {
    if (counts[m] != expected) {
      throw DataError("draws file: draw at iteration " + std::to_string(post.draws[m].iteration) + " has " +
                      std::to_string(counts[m]) + " values, expected " + std::to_string(expected));
    }
  }
  return post;
}

gmrf::GMRFPosterior read_gmrf(const std::map<std::string, Row>& meta, const std::vector<Row>& rows) {
  gmrf::GMRFPosterior post;
  post.first_age = diag_int(meta, "first_age");
  post.first_year = diag_int(meta, "first_year");
  post.shape = {diag_int(meta, "n_ages"), diag_int(meta, "n_years")};
  post.seed = diag_seed(meta);
  if (post.shape.n_ages < 1 || post.shape.n_years < 1) throw DataError("draws file: empty grid shape");
  post.acceptance = diag_double(meta, "acceptance", 0.0);
  post.rho_acceptance = diag_double(meta, "rho_acceptance", 0.0);
  post.delta = diag_double(meta, "delta", 0.0);
  post.rho_step = diag_double(meta, "rho_step", 0.0);

  const std::size_t expected = static_cast<std::size_t>(post.shape.size()) + 3;
  std::map<long, std::size_t> index;
  std::vector<std::size_t> counts;
  for (const Row& r : rows) {
    auto [it, fresh] = index.try_emplace(r.iter, post.draws.size());
    if (fresh) {
      if (!post.draws.empty() && r.iter < post.draws.back().iteration) fail(r, "iterations out of order");
      gmrf::GMRFDraw d;
      d.iteration = r.iter;
      d.x = Eigen::VectorXd::Zero(post.shape.size());
      post.draws.push_back(std::move(d));
      counts.push_back(0);
    }
    gmrf::GMRFDraw& d = post.draws[it->second];
    double v = 0.0;
    try {
      v = csv::parse_double(r.value);
    } catch (const DataError& e) {
      fail(r, e.what());
    }
    if (r.block == "x") {
      const auto [a, b] = split_dot(r.name);
      long age = 0, year = 0;
      try {
        age = csv::parse_long(a);
        year = csv::parse_long(b);
      } catch (const DataError&) {
        fail(r, "bad cell name '" + r.name + "'");
      }
      const long z = age - post.first_age;
      const long t = year - post.first_year;
      if (z < 0 || z >= post.shape.n_ages || t < 0 || t >= post.shape.n_years) fail(r, "cell outside the grid");
      d.x[post.shape.index(static_cast<int>(z), static_cast<int>(t))] = v;
    } else if (r.block == "tau") {
      d.hyper.tau = v;
    } else if (r.block == "rho_age") {
      d.hyper.rho_age = v;
    } else if (r.block == "b") {
      d.hyper.drift = v;
    } else {
      fail(r, "unknown block '" + r.block + "'");
    }
    ++counts[it->second];
  }
  for (std::size_t m = 0; m < counts.size(); ++m) {
    if (counts[m] != expected) {
      throw DataError("draws file: draw at iteration " + std::to_string(post.draws[m].iteration) + " has " +
                      std::to_string(counts[m]) + " values, expected " + std::to_string(expected));
    }
  }
  return post;
}

}  // namespace

void write_hp_draws_csv(std::ostream& out, const hp::HPPosterior& post) {
  RowWriter w(out);
  w.raw(0, "diagnostics", "model", "hp");
  w.row(0, "diagnostics", "first_age", post.first_age);
  w.row(0, "diagnostics", "n_ages", post.n_ages);
  w.row(0, "diagnostics", "first_year", post.first_year);
  w.row(0, "diagnostics", "n_years", post.n_years);
  w.raw(0, "diagnostics", "seed", std::to_string(post.seed));
  for (int i = 0; i < hp::kDim; ++i) {
    w.row(0, "diagnostics", "eta." + letter(i), post.box.lower[i]);
    w.row(0, "diagnostics", "xi." + letter(i), post.box.upper[i]);
  }
  for (std::size_t t = 0; t < post.acceptance.size(); ++t) {
    const std::string y = std::to_string(post.first_year + static_cast<int>(t));
    w.row(0, "diagnostics", "acceptance." + y, post.acceptance[t]);
    w.row(0, "diagnostics", "scale." + y, post.scales[t]);
  }
  for (int y : post.borrowed_seeds) w.row(0, "diagnostics", "borrowed." + std::to_string(y), 1.0);
  w.row(0, "diagnostics", "hyper_acceptance", post.hyper_acceptance);

  for (const hp::HPDraw& d : post.draws) {
    for (std::size_t t = 0; t < d.path.size(); ++t) {
      const std::string y = std::to_string(post.first_year + static_cast<int>(t));
      for (int i = 0; i < hp::kDim; ++i) w.row(d.iteration, "psi", letter(i) + "." + y, d.path[t][i]);
    }
    for (int i = 0; i < hp::kDim; ++i) w.row(d.iteration, "mu", letter(i), d.hyper.drift[i]);
    for (int i = 0; i < hp::kDim; ++i) {
      for (int j = 0; j <= i; ++j) w.row(d.iteration, "Sigma", letter(i) + "." + letter(j), d.hyper.innovation(i, j));
    }
    for (int i = 0; i < hp::kDim; ++i) w.row(d.iteration, "alpha", letter(i), d.hyper.aux[i]);
  }
}

void write_gmrf_draws_csv(std::ostream& out, const gmrf::GMRFPosterior& post) {
  RowWriter w(out);
  w.raw(0, "diagnostics", "model", "gmrf");
  w.row(0, "diagnostics", "first_age", post.first_age);
  w.row(0, "diagnostics", "n_ages", post.shape.n_ages);
  w.row(0, "diagnostics", "first_year", post.first_year);
  w.row(0, "diagnostics", "n_years", post.shape.n_years);
  w.raw(0, "diagnostics", "seed", std::to_string(post.seed));
  w.row(0, "diagnostics", "acceptance", post.acceptance);
  w.row(0, "diagnostics", "rho_acceptance", post.rho_acceptance);
  w.row(0, "diagnostics", "delta", post.delta);
  w.row(0, "diagnostics", "rho_step", post.rho_step);

  std::vector<std::string> names;
  for (int z = 0; z < post.shape.n_ages; ++z) {
    for (int t = 0; t < post.shape.n_years; ++t) {
      names.push_back(std::to_string(post.first_age + z) + "." + std::to_string(post.first_year + t));
    }
  }
  for (const gmrf::GMRFDraw& d : post.draws) {
    for (Eigen::Index i = 0; i < d.x.size(); ++i) w.row(d.iteration, "x", names[static_cast<std::size_t>(i)], d.x[i]);
    w.row(d.iteration, "tau", "tau", d.hyper.tau);
    w.row(d.iteration, "rho_age", "rho_age", d.hyper.rho_age);
    w.row(d.iteration, "b", "b", d.hyper.drift);
  }
}

LoadedDraws read_draws_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || csv::trim(line) != "iter,block,name,value") {
    throw DataError("draws file: expected header 'iter,block,name,value'");
  }
  std::map<std::string, Row> meta;
  std::vector<Row> rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view body = csv::trim(line);
    if (body.empty()) continue;
    const auto f = csv::split(body);
    Row r;
    r.line = line_no;
    if (f.size() != 4) fail(r, "expected 4 fields");
    try {
      r.iter = csv::parse_long(f[0]);
    } catch (const DataError& e) {
      fail(r, e.what());
    }
    r.block = std::string(csv::trim(f[1]));
    r.name = std::string(csv::trim(f[2]));
    r.value = std::string(csv::trim(f[3]));
    if (r.block == "diagnostics") {
      if (!rows.empty()) fail(r, "diagnostics rows must precede the draws");
      meta[r.name] = std::move(r);
    } else {
      if (r.iter < 1) fail(r, "draw iterations start at 1");
      rows.push_back(std::move(r));
    }
  }
  const auto model_it = meta.find("model");
  if (model_it == meta.end()) throw DataError("draws file: missing diagnostics entry 'model'");
  LoadedDraws out;
  out.model = parse_model_tag(model_it->second.value);
  if (out.model == ModelTag::hp) {
    out.hp = read_hp(meta, rows);
  } else if (out.model == ModelTag::gmrf) {
    out.gmrf = read_gmrf(meta, rows);
  } else {
    throw DataError("draws file: unsupported model");
  }
  return out;
}

std::vector<ScalarTrace> scalar_traces(const LoadedDraws& draws) {
  std::vector<ScalarTrace> out;
  if (draws.hp) {
    const hp::HPPosterior& p = *draws.hp;
    auto add = [&](std::string block, std::string name, auto&& get) {
      ScalarTrace tr{std::move(block), std::move(name), {}};
      tr.values.reserve(p.draws.size());
      for (const hp::HPDraw& d : p.draws) tr.values.push_back(get(d));
      out.push_back(std::move(tr));
    };
    for (int t = 0; t < p.n_years; ++t) {
      for (int i = 0; i < hp::kDim; ++i) {
        add("psi", letter(i) + "." + std::to_string(p.first_year + t),
            [&](const hp::HPDraw& d) { return d.path[static_cast<std::size_t>(t)][i]; });
      }
    }
    for (int i = 0; i < hp::kDim; ++i) add("mu", letter(i), [&](const hp::HPDraw& d) { return d.hyper.drift[i]; });
    for (int i = 0; i < hp::kDim; ++i) {
      for (int j = 0; j <= i; ++j) {
        add("Sigma", letter(i) + "." + letter(j), [&](const hp::HPDraw& d) { return d.hyper.innovation(i, j); });
      }
    }
    for (int i = 0; i < hp::kDim; ++i) add("alpha", letter(i), [&](const hp::HPDraw& d) { return d.hyper.aux[i]; });
  }
  if (draws.gmrf) {
    const gmrf::GMRFPosterior& p = *draws.gmrf;
    auto add = [&](std::string block, std::string name, auto&& get) {
      ScalarTrace tr{std::move(block), std::move(name), {}};
      tr.values.reserve(p.draws.size());
      for (const gmrf::GMRFDraw& d : p.draws) tr.values.push_back(get(d));
      out.push_back(std::move(tr));
    };
    for (int z = 0; z < p.shape.n_ages; ++z) {
      for (int t = 0; t < p.shape.n_years; ++t) {
        const Eigen::Index idx = p.shape.index(z, t);
        add("x", std::to_string(p.first_age + z) + "." + std::to_string(p.first_year + t),
            [&](const gmrf::GMRFDraw& d) { return d.x[idx]; });
      }
    }
    add("tau", "tau", [](const gmrf::GMRFDraw& d) { return d.hyper.tau; });
    add("rho_age", "rho_age", [](const gmrf::GMRFDraw& d) { return d.hyper.rho_age; });
    add("b", "b", [](const gmrf::GMRFDraw& d) { return d.hyper.drift; });
  }
  return out;
}

}  // namespace mortfc
