#pragma once

// Simulation scenarios, losses, and two risk oracles for the optimal
// smoothing parameter of a cubic smoothing spline.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <lapacke.h>

#include "ssanova/dataset.hpp"
#include "ssanova/errors.hpp"
#include "ssanova/model.hpp"
#include "ssanova/solver.hpp"

namespace ssanova {

namespace scenario_fn {

inline double beta_density(double a, double b, double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  const double logc = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  return std::exp(logc + (a - 1) * std::log(x) + (b - 1) * std::log1p(-x));
}

inline double u1(std::span<const double> x) {
  return (beta_density(20, 5, x[0]) + beta_density(12, 12, x[0]) + beta_density(7, 30, x[0])) / 3.0;
}

inline double u2(std::span<const double> x) {
  const double s = std::sin(2 * std::numbers::pi * x[0]);
  return x[0] <= 0.5 ? 10.0 * s * s : 0.0;
}

inline double u3(std::span<const double> x) {
  const double t = x[0];
  return 10.0 * (-t + 2.0 * (t - 0.25)) * (t >= 0.25 ? 1.0 : 0.0) +
         2.0 * (-t + 0.75) * (t >= 0.75 ? 1.0 : 0.0);
}

inline double m1(std::span<const double> x) {
  const double s1 = 0.3, s2 = 0.4;
  const double c = 1.0 / (std::numbers::pi * s1 * s2);
  auto bump = [&](double a, double b) {
    return std::exp(-(x[0] - a) * (x[0] - a) / (s1 * s1) - (x[1] - b) * (x[1] - b) / (s2 * s2));
  };
  return 0.75 * c * bump(0.2, 0.3) + 0.45 * c * bump(0.7, 0.8);
}

inline double g1(double t) { return 1e6 * std::pow(t, 11) * std::pow(1 - t, 6); }
inline double g2(double a, double b) { return std::exp(3 * a * b); }
inline double g3(double a, double b, double c) {
  return 15 * std::sin(2 * std::numbers::pi * a) / (2 - std::sin(2 * std::numbers::pi * b * c));
}

inline double m2(std::span<const double> x) {
  return 10 * std::sin(std::numbers::pi * x[0]) + std::exp(3 * x[1]) + g1(x[2]) +
         1e4 * std::pow(x[2], 3) * std::pow(1 - x[2], 10);
}

inline double m3(std::span<const double> x) {
  return 10 * x[1] + 10 * std::sin(std::numbers::pi * (x[2] - x[1])) +
         5 * std::cos(2 * std::numbers::pi * (x[0] - x[1]));
}

inline double m4(std::span<const double> x) {
  double v = 0;
  for (int j = 0; j < 18; ++j) v += g1(x[j]);
  for (int j = 0; j < 9; ++j) v += g2(x[2 * j], x[2 * j + 1]);
  for (int j = 0; j < 6; ++j) v += g3(x[3 * j], x[3 * j + 1], x[3 * j + 2]);
  return v;
}

}  // namespace scenario_fn

struct Scenario {
  std::string id;
  std::size_t dims = 1;
  double (*eval)(std::span<const double>) = nullptr;
  std::vector<Effect> effects;

  ModelSpec spec() const {
    std::vector<PredictorDomain> doms(dims, PredictorDomain::continuous(0.0, 1.0));
    return enumerate_terms(effects, doms);
  }
};

inline std::vector<std::string> scenario_ids() { return {"u1", "u2", "u3", "m1", "m2", "m3", "m4"}; }

inline Scenario make_scenario(const std::string& id) {
  using namespace scenario_fn;
  if (id == "u1") return {id, 1, u1, {{0}}};
  if (id == "u2") return {id, 1, u2, {{0}}};
  if (id == "u3") return {id, 1, u3, {{0}}};
  if (id == "m1") return {id, 2, m1, two_way_effects(2)};
  if (id == "m2") return {id, 3, m2, additive_effects(3)};
  if (id == "m3") return {id, 3, m3, {{1}, {1, 2}, {0, 1}}};
  if (id == "m4") {
    auto effects = additive_effects(18);
    for (std::size_t j = 0; j < 9; ++j) effects.push_back({2 * j, 2 * j + 1});
    for (std::size_t j = 0; j < 6; ++j) effects.push_back({3 * j, 3 * j + 1, 3 * j + 2});
    return {id, 18, m4, effects};
  }
  throw InputError("simulation: unknown scenario '" + id + "'");
}

inline double scenario_eval(const std::string& id, std::span<const double> row) {
  const auto sc = make_scenario(id);
  detail::require(row.size() == sc.dims, "simulation: row has wrong dimension for " + id);
  for (double v : row) kernel::check_unit(v);
  return sc.eval(row);
}

struct SimulatedData {
  Dataset data;
  Eigen::VectorXd eta;
  double sigma = 0.0;
  double snr = 0.0;
  std::uint64_t seed = 0;
};

inline double sample_sd(const Eigen::VectorXd& v) {
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

inline SimulatedData gen_data(const std::string& id, std::size_t n, double snr, std::uint64_t seed) {
  detail::require(n >= 10, "simulation: need n >= 10");
  detail::require(snr > 0 && std::isfinite(snr), "simulation: snr must be positive");
  const auto sc = make_scenario(id);
  SimulatedData out;
  out.snr = snr;
  out.seed = seed;
  auto& d = out.data;
  d.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(sc.dims));
  d.domains.assign(sc.dims, PredictorDomain::continuous(0.0, 1.0));
  for (std::size_t j = 0; j < sc.dims; ++j) d.names.push_back("x" + std::to_string(j + 1));
  std::mt19937_64 xr(derive_seed(seed, 1));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Eigen::Index i = 0; i < d.X.rows(); ++i)
    for (Eigen::Index j = 0; j < d.X.cols(); ++j) d.X(i, j) = unif(xr);
  out.eta.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) out.eta(static_cast<Eigen::Index>(i)) = sc.eval(d.row(i));
  out.sigma = sample_sd(out.eta) / snr;
  std::mt19937_64 er(derive_seed(seed, 2));
  std::normal_distribution<double> noise(0.0, 1.0);
  d.y.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < d.y.size(); ++i) d.y(i) = out.eta(i) + out.sigma * noise(er);
  return out;
}

inline double loss(const Eigen::VectorXd& fitted, const Eigen::VectorXd& truth) {
  detail::require(fitted.size() == truth.size() && fitted.size() > 0,
                  "simulation: loss needs equal, nonempty vectors");
  return (fitted - truth).squaredNorm() / static_cast<double>(fitted.size());
}

struct Efficacy {
  double re = 1.0;
  double log_re = 0.0;
};

inline Efficacy relative_efficacy(const Eigen::VectorXd& candidate, const Eigen::VectorXd& benchmark,
                                  const Eigen::VectorXd& truth) {
  detail::require(candidate.size() == truth.size() && benchmark.size() == truth.size(),
                  "simulation: relative efficacy needs equal-length vectors");
  const double den = (benchmark - truth).squaredNorm();
  if (!(den > 0)) throw NumericalError("simulation: benchmark has zero loss");
  Efficacy e;
  e.re = (candidate - truth).squaredNorm() / den;
  e.log_re = std::log(e.re);
  return e;
}

inline std::vector<double> log_grid(double lo, double hi, std::size_t count) {
  detail::require(lo > 0 && hi > lo && count >= 2, "simulation: invalid lambda grid");
  std::vector<double> g(count);
  for (std::size_t k = 0; k < count; ++k) {
    g[k] = lo * std::pow(hi / lo, static_cast<double>(k) / static_cast<double>(count - 1));
  }
  return g;
}

struct RiskCurve {
  std::vector<double> lambda;
  std::vector<double> risk;
  std::size_t best = 0;
  bool at_boundary = false;

  double argmin() const { return lambda[best]; }
};

namespace detail {

inline RiskCurve pick_min(std::vector<double> grid, std::vector<double> risk) {
  RiskCurve c;
  c.lambda = std::move(grid);
  c.risk = std::move(risk);
  c.best = static_cast<std::size_t>(std::min_element(c.risk.begin(), c.risk.end()) - c.risk.begin());
  c.at_boundary = c.best == 0 || c.best + 1 == c.risk.size();
  return c;
}

}  // namespace detail

/// Risk n^{-1}|(I - A)eta|^2 + n^{-1} sigma^2 tr(A^2) on a lambda grid, for a
/// full-basis fit, through the Demmler-Reinsch form.
inline RiskCurve oracle_lambda(const Eigen::MatrixXd& T, const Eigen::MatrixXd& K_full,
                               const Eigen::VectorXd& eta, double sigma,
                               const std::vector<double>& grid) {
  detail::require(eta.size() == T.rows(), "simulation: eta length mismatch");
  detail::require(sigma >= 0, "simulation: sigma must be nonnegative");
  detail::require(grid.size() >= 2, "simulation: grid too small");
  const auto es = demmler_reinsch(T, K_full);
  const double n = static_cast<double>(T.rows());
  const Eigen::VectorXd h2 = (es.Z.transpose() * eta).array().square();
  const Eigen::VectorXd z = es.D.cwiseMax(0.0);
  std::vector<double> risk;
  for (double lam : grid) {
    const double a = n * lam;
    double bias = 0, var = static_cast<double>(T.cols());
    for (Eigen::Index k = 0; k < z.size(); ++k) {
      const double s = z(k) + a;
      bias += a * a * h2(k) / (s * s);
      var += (z(k) / s) * (z(k) / s);
    }
    risk.push_back((bias + sigma * sigma * var) / n);
  }
  return detail::pick_min(grid, std::move(risk));
}

/// Same risk for a univariate cubic smoothing spline on a sorted design,
/// computed in O(n) per grid point from the banded second-difference form.
class BandedCubicOracle {
 public:
  BandedCubicOracle(std::vector<double> x, Eigen::VectorXd eta) : x_(std::move(x)), eta_(std::move(eta)) {
    const auto n = x_.size();
    detail::require(n >= 4 && eta_.size() == static_cast<Eigen::Index>(n),
                    "simulation: banded oracle needs n >= 4 matching values");
    for (std::size_t i = 1; i < n; ++i)
      detail::require(x_[i] > x_[i - 1], "simulation: banded oracle needs strictly increasing x");
    const std::size_t m = n - 2;
    h_.resize(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) h_[i] = x_[i + 1] - x_[i];
    // Q is n x m with column j holding (1/h_j, -1/h_j - 1/h_{j+1}, 1/h_{j+1})
    // at rows j, j+1, j+2.
    qa_.resize(m);
    qb_.resize(m);
    qc_.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      qa_[j] = 1.0 / h_[j];
      qb_[j] = -1.0 / h_[j] - 1.0 / h_[j + 1];
      qc_[j] = 1.0 / h_[j + 1];
    }
    qty_ = qt(eta_);
    // Lower-band storage, ld = 3: QtQ and R.
    qtq_.assign(3 * m, 0.0);
    r_.assign(2 * m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      qtq_[3 * j] = qa_[j] * qa_[j] + qb_[j] * qb_[j] + qc_[j] * qc_[j];
      if (j + 1 < m) qtq_[3 * j + 1] = qb_[j] * qa_[j + 1] + qc_[j] * qb_[j + 1];
      if (j + 2 < m) qtq_[3 * j + 2] = qc_[j] * qa_[j + 2];
      r_[2 * j] = (h_[j] + h_[j + 1]) / 3.0;
      if (j + 1 < m) r_[2 * j + 1] = h_[j + 1] / 6.0;
    }
    // Generalized eigenvalues of QtQ w = kappa R w.
    std::vector<double> ab = qtq_, bb = r_;
    kappa_.assign(m, 0.0);
    double dummy = 0.0;
    const auto info = LAPACKE_dsbgv(LAPACK_COL_MAJOR, 'N', 'L', static_cast<lapack_int>(m), 2, 1,
                                    ab.data(), 3, bb.data(), 2, kappa_.data(), &dummy, 1);
    if (info != 0) throw NumericalError("simulation: banded eigenproblem failed (info " + std::to_string(info) + ")");
  }

  std::size_t size() const { return x_.size(); }

  /// |(I - A) eta|^2 at alpha = n*lambda.
  double bias2(double alpha) const {
    const auto m = static_cast<lapack_int>(qty_.size());
    std::vector<double> ab(3 * qty_.size());
    for (std::size_t j = 0; j < qty_.size(); ++j) {
      ab[3 * j] = r_[2 * j] + alpha * qtq_[3 * j];
      ab[3 * j + 1] = r_[2 * j + 1] + alpha * qtq_[3 * j + 1];
      ab[3 * j + 2] = alpha * qtq_[3 * j + 2];
    }
    std::vector<double> g(qty_.begin(), qty_.end());
    const auto info = LAPACKE_dpbsv(LAPACK_COL_MAJOR, 'L', m, 2, 1, ab.data(), 3, g.data(), m);
    if (info != 0) throw NumericalError("simulation: banded solve failed (info " + std::to_string(info) + ")");
    double s = 0.0;
    const auto n = x_.size();
    for (std::size_t i = 0; i < n; ++i) {
      double v = 0.0;
      // row i of Q touches columns i-2, i-1, i
      if (i >= 2) v += qc_[i - 2] * g[i - 2];
      if (i >= 1 && i - 1 < qty_.size()) v += qb_[i - 1] * g[i - 1];
      if (i < qty_.size()) v += qa_[i] * g[i];
      s += alpha * alpha * v * v;
    }
    return s;
  }

  /// tr(A^2) at alpha = n*lambda.
  double trace_a2(double alpha) const {
    double t = 2.0;
    for (double k : kappa_) {
      const double e = 1.0 / (1.0 + alpha * std::max(k, 0.0));
      t += e * e;
    }
    return t;
  }

  double risk(double lambda, double sigma) const {
    const double n = static_cast<double>(size());
    const double a = n * lambda;
    return (bias2(a) + sigma * sigma * trace_a2(a)) / n;
  }

  RiskCurve curve(double sigma, const std::vector<double>& grid) const {
    std::vector<double> r;
    for (double lam : grid) r.push_back(risk(lam, sigma));
    return detail::pick_min(grid, std::move(r));
  }

 private:
  Eigen::VectorXd qt(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(qa_.size()));
    for (std::size_t j = 0; j < qa_.size(); ++j) {
      const auto i = static_cast<Eigen::Index>(j);
      out(i) = qa_[j] * v(i) + qb_[j] * v(i + 1) + qc_[j] * v(i + 2);
    }
    return out;
  }

  std::vector<double> x_;
  Eigen::VectorXd eta_;
  std::vector<double> h_, qa_, qb_, qc_;
  Eigen::VectorXd qty_;
  std::vector<double> qtq_, r_, kappa_;
};

/// (1/pi) int_0^inf (1 + t^{2m})^{-2} dt.
inline double periodic_constant(int m) {
  detail::require(m >= 1 && m <= 3, "simulation: m must be 1, 2 or 3");
  boost::math::quadrature::exp_sinh<double> integrator;
  auto f = [m](double t) {
    const double u = 1.0 + std::pow(t, 2 * m);
    return 1.0 / (u * u);
  };
  double err = 0.0;
  const double v = integrator.integrate(f, 1e-12, &err);
  return v / std::numbers::pi;
}

/// Optimal lambda of a periodic spline of order m, ignoring o(1) terms.
inline double analytic_lambda_periodic(int m, double sigma2, double eta_norm_sq, double n) {
  detail::require(eta_norm_sq > 0, "simulation: derivative norm must be nonzero");
  detail::require(sigma2 > 0 && n >= 1, "simulation: need sigma^2 > 0 and n >= 1");
  const double e = 2.0 * m / (4.0 * m + 1.0);
  const double k = periodic_constant(m);
  return std::pow(k / (4.0 * m) * sigma2 / eta_norm_sq, e) * std::pow(n, -e);
}

}  // namespace ssanova
