#include "mortfc/hpcurve.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "mortfc/errors.hpp"

namespace mortfc::hp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFLo = 10.0;
constexpr double kFHi = 40.0;

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double checked_logit(double v, const char* name) {
  if (!(v > 0.0 && v < 1.0)) throw ValidationError(std::string("HP parameter ") + name + " must lie in (0,1)");
  return std::log(v / (1.0 - v));
}

double checked_log(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string("HP parameter ") + name + " must be positive");
  return std::log(v);
}

// Per-age pieces shared by the odds, the likelihood and the Jacobian.
struct Terms {
  double childhood = 0.0;
  double hump = 0.0;
  double senescent = 0.0;
};

Terms terms(int age, const HPNatural& p) {
  Terms t;
  const double z = static_cast<double>(age);
  t.childhood = std::exp(std::log(p.A) * std::pow(z + p.B, p.C));
  if (age > 0) {
    const double l = std::log(z) - std::log(p.F);
    t.hump = p.D * std::exp(-p.E * l * l);
  }
  t.senescent = p.G * std::exp(z * std::log(p.H));
  return t;
}

}  // namespace

TruncationBox TruncationBox::defaults() {
  TruncationBox box;
  box.lower << -10.61, -10.61, -5.99, -11.29, -25.33, -kInf, -17.5, -1.39;
  box.upper << -2.75, -0.2, 2.2, -3.48, 4.09, 2.64, -3.48, 0.18;
  return box;
}

TruncationBox TruncationBox::unbounded() {
  TruncationBox box;
  box.lower.setConstant(-kInf);
  box.upper.setConstant(kInf);
  return box;
}

bool TruncationBox::contains(const HPVector& psi) const {
  for (int i = 0; i < kDim; ++i) {
    if (!(psi[i] >= lower[i] && psi[i] <= upper[i])) return false;
  }
  return true;
}

HPVector TruncationBox::clamp(const HPVector& psi) const {
  HPVector out;
  for (int i = 0; i < kDim; ++i) out[i] = std::clamp(psi[i], lower[i], upper[i]);
  return out;
}

HPVector transform(const HPNatural& p) {
  HPVector psi;
  psi[0] = checked_logit(p.A, "A");
  psi[1] = checked_logit(p.B, "B");
  psi[2] = checked_logit(p.C, "C");
  psi[3] = checked_logit(p.D, "D");
  psi[4] = checked_log(p.E, "E");
  if (!(p.F > kFLo && p.F < kFHi)) throw ValidationError("HP parameter F must lie in (10,40)");
  psi[5] = std::log((p.F - kFLo) / (kFHi - p.F));
  psi[6] = checked_logit(p.G, "G");
  psi[7] = checked_log(p.H, "H");
  return psi;
}

HPNatural inverse_transform(const HPVector& psi) {
  HPNatural p;
  p.A = logistic(psi[0]);
  p.B = logistic(psi[1]);
  p.C = logistic(psi[2]);
  p.D = logistic(psi[3]);
  p.E = std::exp(psi[4]);
  p.F = kFLo + (kFHi - kFLo) * logistic(psi[5]);
  p.G = logistic(psi[6]);
  p.H = std::exp(psi[7]);
  return p;
}

double hp_odds(int age, const HPNatural& p) {
  const Terms t = terms(age, p);
  return t.childhood + t.hump + t.senescent;
}

double hp_odds(int age, const HPVector& psi) { return hp_odds(age, inverse_transform(psi)); }

double hp_prob(int age, const HPNatural& p) {
  const double k = hp_odds(age, p);
  return k / (1.0 + k);
}

double hp_prob(int age, const HPVector& psi) { return hp_prob(age, inverse_transform(psi)); }

OddsGradient hp_odds_grad(int age, const HPNatural& p) {
  const Terms t = terms(age, p);
  const double z = static_cast<double>(age);
  OddsGradient out;
  out.odds = t.childhood + t.hump + t.senescent;

  const double base = z + p.B;
  const double u = std::pow(base, p.C);
  const double log_a = std::log(p.A);
  // d/dA~ of A^u with A = logistic(A~): A^u * u * (1 - A)
  out.grad[0] = t.childhood * u * (1.0 - p.A);
  // d/dB~: A^u log A * C base^{C-1} * B(1-B)
  out.grad[1] = t.childhood * log_a * p.C * std::pow(base, p.C - 1.0) * p.B * (1.0 - p.B);
  // d/dC~: A^u log A * u log(base) * C(1-C)
  out.grad[2] = t.childhood * log_a * u * std::log(base) * p.C * (1.0 - p.C);
  if (age > 0) {
    const double l = std::log(z) - std::log(p.F);
    out.grad[3] = t.hump * (1.0 - p.D);
    out.grad[4] = -t.hump * l * l * p.E;
    // dF/dF~ = (F-10)(40-F)/30
    out.grad[5] = t.hump * 2.0 * p.E * l / p.F * (p.F - kFLo) * (kFHi - p.F) / (kFHi - kFLo);
  }
  out.grad[6] = t.senescent * (1.0 - p.G);
  out.grad[7] = t.senescent * z;
  return out;
}

double year_loglik(const HPVector& psi, const Eigen::Ref<const Eigen::VectorXd>& deaths,
                   const Eigen::Ref<const Eigen::VectorXd>& exposures, int first_age) {
  const HPNatural p = inverse_transform(psi);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < deaths.size(); ++i) {
    const double k = hp_odds(first_age + static_cast<int>(i), p);
    if (deaths[i] > 0.0) acc += deaths[i] * std::log(k);
    acc -= exposures[i] * std::log1p(k);
  }
  return acc;
}

HPVector year_loglik_grad(const HPVector& psi, const Eigen::Ref<const Eigen::VectorXd>& deaths,
                          const Eigen::Ref<const Eigen::VectorXd>& exposures, int first_age) {
  const HPNatural p = inverse_transform(psi);
  HPVector g = HPVector::Zero();
  for (Eigen::Index i = 0; i < deaths.size(); ++i) {
    const OddsGradient og = hp_odds_grad(first_age + static_cast<int>(i), p);
    g += (deaths[i] / og.odds - exposures[i] / (1.0 + og.odds)) * og.grad;
  }
  return g;
}

HPVector default_start() {
  return transform(HPNatural{0.0005, 0.01, 0.1, 0.001, 10.0, 20.0, 0.00005, 1.1});
}

HPMatrix repair_spd(const HPMatrix& m) {
  HPMatrix sym = 0.5 * (m + m.transpose());
  if (Eigen::LLT<HPMatrix>(sym).info() == Eigen::Success && sym.allFinite()) return sym;
  const double base = std::max(sym.trace() / kDim, std::numeric_limits<double>::min());
  for (double eps = 1e-10; eps <= 1e-4 * (1.0 + 1e-12); eps *= 2.0) {
    HPMatrix trial = sym + eps * base * HPMatrix::Identity();
    if (Eigen::LLT<HPMatrix>(trial).info() == Eigen::Success) return trial;
  }
  throw NumericalError("matrix could not be repaired to SPD by jitter up to 1e-4 * trace/8");
}

namespace {

struct Linearization {
  double objective = 0.0;
  Eigen::VectorXd residual;
  Eigen::Matrix<double, Eigen::Dynamic, kDim> jacobian;
};

// Residuals (q - p) / q~ and their Jacobian with respect to psi.
Linearization linearize(const HPVector& psi, const Eigen::VectorXd& rates, const Eigen::VectorXd& scale,
                        int first_age, bool with_jacobian) {
  const HPNatural p = inverse_transform(psi);
  const Eigen::Index n = rates.size();
  Linearization lin;
  lin.residual.resize(n);
  if (with_jacobian) lin.jacobian.resize(n, kDim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int age = first_age + static_cast<int>(i);
    if (with_jacobian) {
      const OddsGradient og = hp_odds_grad(age, p);
      const double prob = og.odds / (1.0 + og.odds);
      const double dp_dk = 1.0 / ((1.0 + og.odds) * (1.0 + og.odds));
      lin.residual[i] = (rates[i] - prob) / scale[i];
      lin.jacobian.row(i) = (-dp_dk / scale[i]) * og.grad.transpose();
    } else {
      lin.residual[i] = (rates[i] - hp_prob(age, p)) / scale[i];
    }
  }
  lin.objective = lin.residual.squaredNorm();
  return lin;
}

}  // namespace

WlsResult wls_fit(const Eigen::Ref<const Eigen::VectorXd>& rates, const Eigen::Ref<const Eigen::VectorXd>& exposures,
                  int first_age, const TruncationBox& box, const std::optional<HPVector>& start,
                  const WlsOptions& options) {
  const Eigen::Index n = rates.size();
  if (exposures.size() != n || n == 0) throw ValidationError("wls_fit: rates and exposures differ in length");
  Eigen::VectorXd q = rates;
  Eigen::VectorXd scale(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(q[i] >= 0.0) || !(exposures[i] > 0.0)) throw ValidationError("wls_fit: invalid rate or exposure");
    scale[i] = std::max(q[i], 0.5 / exposures[i]);
  }

  HPVector psi = box.clamp(start.value_or(default_start()));
  for (int i = 0; i < kDim; ++i) {
    if (!std::isfinite(psi[i])) psi[i] = default_start()[i];
  }
  psi = box.clamp(psi);

  WlsResult result;
  Linearization lin = linearize(psi, q, scale, first_age, true);
  result.objective_trace.push_back(lin.objective);
  double damping = options.initial_damping;
  int it = 0;
  result.status = WlsStatus::max_iterations;
  for (; it < options.max_iterations; ++it) {
    const HPVector grad = lin.jacobian.transpose() * lin.residual;
    const HPMatrix info = lin.jacobian.transpose() * lin.jacobian;

    // Coordinates pinned at a bound with the descent direction pointing outward.
    std::array<bool, kDim> active{};
    double pg_norm = 0.0;
    for (int i = 0; i < kDim; ++i) {
      active[i] = (psi[i] <= box.lower[i] && grad[i] > 0.0) || (psi[i] >= box.upper[i] && grad[i] < 0.0);
      if (!active[i]) pg_norm = std::max(pg_norm, std::abs(grad[i]));
    }
    if (pg_norm < options.gradient_tolerance) {
      result.status = WlsStatus::gradient_tolerance;
      break;
    }

    bool improved = false;
    while (!improved && damping < 1e16) {
      HPMatrix system = info;
      HPVector rhs = -grad;
      for (int i = 0; i < kDim; ++i) {
        system(i, i) += damping * std::max(info(i, i), 1e-12);
        if (active[i]) {
          system.row(i).setZero();
          system.col(i).setZero();
          system(i, i) = 1.0;
          rhs[i] = 0.0;
        }
      }
      const HPVector step = system.ldlt().solve(rhs);
      if (!step.allFinite()) {
        damping *= 10.0;
        continue;
      }
      const HPVector trial = box.clamp(psi + step);
      Linearization cand = linearize(trial, q, scale, first_age, false);
      if (std::isfinite(cand.objective) && cand.objective < lin.objective) {
        psi = trial;
        lin = linearize(psi, q, scale, first_age, true);
        result.objective_trace.push_back(lin.objective);
        damping = std::max(damping * 0.3, 1e-12);
        improved = true;
      } else {
        damping *= 10.0;
      }
    }
    if (!improved) {
      result.status = WlsStatus::stalled;
      break;
    }
  }
  result.iterations = it;
  result.mean = psi;
  result.objective = lin.objective;

  // Gauss-Newton covariance scaled by the weighted residual mean square.
  const HPMatrix info = lin.jacobian.transpose() * lin.jacobian;
  HPMatrix info_inv;
  {
    const HPMatrix repaired = repair_spd(info);
    info_inv = Eigen::LLT<HPMatrix>(repaired).solve(HPMatrix::Identity());
  }
  const double dof = n > kDim ? static_cast<double>(n - kDim) : static_cast<double>(n);
  const double sigma2 = std::max(lin.objective / dof, 1e-16);
  result.cov = repair_spd(sigma2 * info_inv);
  return result;
}

}  // namespace mortfc::hp
