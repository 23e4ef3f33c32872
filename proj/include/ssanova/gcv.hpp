#pragma once

// Generalized cross-validation: score, one-dimensional search over n*lambda,
// the skip initialization of theta, and the iterative multi-theta search.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssanova/errors.hpp"
#include "ssanova/solver.hpp"

namespace ssanova {

struct GcvResult {
  SmoothingParams params;
  double score = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  bool at_boundary = false;   // n*lambda search ended on the bracket edge
  bool theta_floored = false;  // skip step hit a zero quadratic form
  Eigen::VectorXd theta_start;  // raw skip estimate before rescaling
  std::vector<double> score_trace;
};

struct LambdaSearch {
  double lo = -12.0;  // log10(n*lambda)
  double hi = 3.0;
  double step = 0.1;
  double tol = 1e-4;
};

inline double gcv_score(const Eigen::MatrixXd& T, const Eigen::MatrixXd& K,
                        const Eigen::MatrixXd& Q, const Eigen::VectorXd& y, double nlambda) {
  return PenalizedSystem(T, K, Q, y).evaluate(nlambda).gcv;
}

inline double gcv_score(const ComponentBlocks& blocks, const Eigen::VectorXd& y,
                        const SmoothingParams& params) {
  const Eigen::VectorXd theta = params.theta();
  return gcv_score(blocks.T, blocks.combine_K(theta), blocks.combine_Q(theta), y,
                   params.nlambda());
}

struct ScalarMinimum {
  double x = 0.0;
  double value = std::numeric_limits<double>::infinity();
  bool at_boundary = false;
};

/// Grid scan followed by golden-section refinement inside the bracket
/// around the best grid point.
inline ScalarMinimum minimize_scalar(const std::function<double(double)>& f,
                                     const LambdaSearch& s = {}) {
  detail::require(s.hi > s.lo && s.step > 0 && s.tol > 0, "gcv: invalid search bracket");
  const int steps = std::max(2, static_cast<int>(std::ceil((s.hi - s.lo) / s.step - 1e-9)));
  const double h = (s.hi - s.lo) / steps;
  int best = -1;
  double best_val = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= steps; ++i) {
    const double v = f(s.lo + i * h);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  if (best < 0) throw NumericalError("gcv: score is infinite over the whole search bracket");

  ScalarMinimum out;
  out.at_boundary = best == 0 || best == steps;
  out.x = s.lo + best * h;
  out.value = best_val;

  double a = s.lo + std::max(best - 1, 0) * h;
  double b = s.lo + std::min(best + 1, steps) * h;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - g * (b - a);
  double x2 = a + g * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > s.tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = f(x2);
    }
  }
  const double xm = 0.5 * (a + b);
  const double fm = f(xm);
  for (auto [x, v] : {std::pair{x1, f1}, std::pair{x2, f2}, std::pair{xm, fm}}) {
    if (v < out.value) {
      out.value = v;
      out.x = x;
    }
  }
  return out;
}

namespace detail {

/// Rescales theta so that sum_delta theta_delta * mean_diag_delta = 1 and
/// moves n*lambda along, which leaves every fitted value unchanged.
inline SmoothingParams canonical(const SmoothingParams& p, const Eigen::VectorXd& mean_diag) {
  const Eigen::VectorXd theta = p.theta();
  const double s = theta.dot(mean_diag);
  if (!(s > 0) || !std::isfinite(s)) return p;
  SmoothingParams out = p;
  const double shift = std::log10(s);
  out.log10_theta.array() -= shift;
  out.log10_nlambda -= shift;
  return out;
}

}  // namespace detail

/// Minimizes G over log10(n*lambda) for the system's fixed theta. The scan
/// and refinement run on the spectral form; the reported score comes from
/// the direct factorization.
inline ScalarMinimum minimize_lambda(const PenalizedSystem& sys, const LambdaSearch& s = {}) {
  const HatSpectrum spec = sys.spectrum();
  auto fast = [&](double x) { return spec.gcv(std::pow(10.0, x)); };
  auto exact = [&](double x) {
    try {
      return sys.evaluate(std::pow(10.0, x)).gcv;
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  ScalarMinimum m = minimize_scalar(fast, s);
  const double check = exact(m.x);
  // Guard against a spectral score that drifted from the direct one.
  if (!(std::abs(check - m.value) <= 1e-6 * std::abs(check))) {
    m = minimize_scalar(exact, s);
  } else {
    m.value = check;
  }
  return m;
}

inline GcvResult minimize_lambda(const ComponentBlocks& blocks, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& theta, const LambdaSearch& s = {}) {
  PenalizedSystem sys(blocks.T, blocks.combine_K(theta), blocks.combine_Q(theta), y);
  const auto m = minimize_lambda(sys, s);
  GcvResult out;
  SmoothingParams p;
  p.log10_nlambda = m.x;
  p.log10_theta = theta.array().log10();
  out.params = detail::canonical(p, blocks.mean_diag);
  out.score = m.value;
  out.iterations = 1;
  out.converged = !m.at_boundary;
  out.at_boundary = m.at_boundary;
  out.score_trace = {m.value};
  return out;
}

/// theta0_delta = theta_delta^2 * c' Q_delta c, with zero entries floored at
/// 1e-12 times the largest. Returns whether a floor was applied.
inline bool skip_theta(const ComponentBlocks& blocks, const Eigen::VectorXd& theta,
                       const Eigen::VectorXd& c, Eigen::VectorXd& theta0) {
  const auto S = static_cast<Eigen::Index>(blocks.penalties());
  detail::require(theta.size() == S, "gcv: theta length does not match the penalized terms");
  theta0.resize(S);
  for (Eigen::Index s = 0; s < S; ++s) {
    theta0(s) = theta(s) * theta(s) * c.dot(blocks.Q_parts[static_cast<std::size_t>(s)] * c);
  }
  const double top = theta0.maxCoeff();
  if (!(top > 0)) throw NumericalError("gcv: skip step produced no positive theta");
  bool floored = false;
  for (Eigen::Index s = 0; s < S; ++s) {
    if (!(theta0(s) > 1e-12 * top)) {
      theta0(s) = 1e-12 * top;
      floored = true;
    }
  }
  return floored;
}

inline GcvResult skip_select(const ComponentBlocks& blocks, const Eigen::VectorXd& y,
                             const LambdaSearch& s = {}) {
  const auto S = static_cast<Eigen::Index>(blocks.penalties());
  const double n = static_cast<double>(blocks.rows());
  Eigen::VectorXd theta(S);
  for (Eigen::Index k = 0; k < S; ++k) {
    const double tr = n * blocks.mean_diag(k);
    if (!(tr > 0)) throw NumericalError("gcv: kernel of a penalized term has zero trace");
    theta(k) = 1.0 / tr;
  }
  PenalizedSystem sys(blocks.T, blocks.combine_K(theta), blocks.combine_Q(theta), y);
  const auto first = minimize_lambda(sys, s);
  const auto coef = sys.solve(std::pow(10.0, first.x));

  Eigen::VectorXd theta0;
  const bool floored = skip_theta(blocks, theta, coef.c, theta0);
  auto out = minimize_lambda(blocks, y, theta0, s);
  out.theta_floored = floored;
  out.theta_start = theta0;
  out.iterations = 2;
  return out;
}

struct FullGcvOptions {
  int max_iter = 30;
  double tol = 1e-5;
  double probe = 0.1;  // log10 step for differencing
  LambdaSearch search;
};

inline GcvResult full_gcv(const ComponentBlocks& blocks, const Eigen::VectorXd& y,
                          const FullGcvOptions& opt = {}) {
  detail::require(opt.max_iter >= 0 && opt.tol >= 0 && opt.probe > 0,
                  "gcv: invalid iteration options");
  GcvResult best = skip_select(blocks, y, opt.search);
  const auto S = static_cast<Eigen::Index>(blocks.penalties());
  best.score_trace = {best.score};
  best.iterations = 0;
  if (S == 1) {
    best.converged = !best.at_boundary;
    return best;
  }

  auto score_at = [&](const Eigen::VectorXd& log_theta, double log_nl) {
    SmoothingParams p;
    p.log10_theta = log_theta;
    p.log10_nlambda = log_nl;
    try {
      return gcv_score(blocks, y, p);
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  best.converged = false;
  for (int it = 1; it <= opt.max_iter; ++it) {
    const double start = best.score;
    Eigen::VectorXd lt = best.params.log10_theta;
    const double lnl = best.params.log10_nlambda;
    double g0 = best.score;
    for (Eigen::Index k = 0; k < S; ++k) {
      const double base = lt(k);
      lt(k) = base + opt.probe;
      const double gp = score_at(lt, lnl);
      lt(k) = base - opt.probe;
      const double gm = score_at(lt, lnl);
      double cand = base, gc = g0;
      if (gp < gc) cand = base + opt.probe, gc = gp;
      if (gm < gc) cand = base - opt.probe, gc = gm;
      if (std::isfinite(gp) && std::isfinite(gm)) {
        const double grad = (gp - gm) / (2.0 * opt.probe);
        const double curv = (gp - 2.0 * g0 + gm) / (opt.probe * opt.probe);
        double step = curv > 0 ? -grad / curv : (grad < 0 ? 1.0 : -1.0);
        step = std::clamp(step, -1.0, 1.0);
        if (std::abs(step) > 1e-12 && std::abs(std::abs(step) - opt.probe) > 1e-12) {
          lt(k) = base + step;
          const double gn = score_at(lt, lnl);
          if (gn < gc) cand = base + step, gc = gn;
        }
      }
      lt(k) = cand;
      g0 = gc;
    }

    GcvResult next = minimize_lambda(blocks, y, lt.unaryExpr([](double v) { return std::pow(10.0, v); }),
                                     opt.search);
    if (next.score <= g0) {
      best.params = next.params;
      best.score = next.score;
      best.at_boundary = next.at_boundary;
    } else if (g0 < best.score) {
      SmoothingParams p;
      p.log10_theta = lt;
      p.log10_nlambda = lnl;
      best.params = detail::canonical(p, blocks.mean_diag);
      best.score = g0;
    }
    best.iterations = it;
    best.score_trace.push_back(best.score);
    if (start - best.score < opt.tol * start) {
      best.converged = true;
      break;
    }
  }
  best.converged = best.converged && !best.at_boundary;
  return best;
}

}  // namespace ssanova
