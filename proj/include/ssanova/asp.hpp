#pragma once

// Asympirical smoothing-parameter selection: GCV on small uniform
// subsamples, extrapolated to the full sample size by a power law in n.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssanova/dataset.hpp"
#include "ssanova/errors.hpp"
#include "ssanova/gcv.hpp"
#include "ssanova/model.hpp"
#include "ssanova/parallel.hpp"
#include "ssanova/solver.hpp"

namespace ssanova {

struct AspConfig {
  double b_coef = 50.0;
  double b_max_coef = 120.0;
  int sizes = 10;  // N, number of subsample sizes for the rate fit
  double r = 3.0;
  double p = 1.0;
  std::optional<double> p_fixed;  // skip the p estimate when set
  int subsamples = 5;
  double B_factor = 2.0;
  double basis_coef = 10.0;
  double basis_exp = 2.0 / 9.0;
  std::uint64_t seed = 1;
  FullGcvOptions gcv;

  void validate() const {
    detail::require(b_coef > 0 && b_max_coef >= b_coef, "asp: invalid subsample coefficients");
    detail::require(sizes >= 2, "asp: need at least two subsample sizes");
    detail::require(r > 1, "asp: r must exceed 1");
    detail::require(p >= 1 && p <= 2, "asp: p must lie in [1, 2]");
    if (p_fixed) detail::require(*p_fixed >= 1 && *p_fixed <= 2, "asp: p must lie in [1, 2]");
    detail::require(subsamples >= 1, "asp: need at least one subsample");
    detail::require(B_factor >= 1, "asp: B factor must be at least 1");
    detail::require(basis_coef > 0 && basis_exp > 0 && basis_exp < 1,
                    "asp: invalid basis-count rule");
  }
};

inline double rate_exponent(double r, double p) {
  detail::require(r > 1 && p >= 1 && p <= 2, "asp: invalid (r, p)");
  return r / (p * r + 1.0);
}

/// lambda = C * n^{-r/(pr+1)}.
inline double order_based(double n, double r, double p, double C = 1.0) {
  detail::require(n >= 1, "asp: n must be at least 1");
  detail::require(C > 0, "asp: C must be positive");
  return C * std::pow(n, -rate_exponent(r, p));
}

/// lambda_GCV(b) * (n/b)^{-gamma}.
inline double extrapolate(double lambda_b, double b, double n, double gamma) {
  return lambda_b * std::pow(n / b, -gamma);
}

inline std::size_t subsample_size(std::size_t n, std::size_t null_dim, double coef = 50.0) {
  detail::require(coef > 0, "asp: subsample coefficient must be positive");
  detail::require(n >= null_dim + 10, "asp: n = " + std::to_string(n) +
                                          " is too small for a subsample");
  const auto raw = static_cast<std::size_t>(
      std::llround(coef * std::pow(static_cast<double>(n), 0.25)));
  return std::clamp(raw, null_dim + 10, n);
}

struct SubsampleFit {
  std::size_t b = 0;
  double lambda = 0.0;  // lambda, not n*lambda
  Eigen::VectorXd theta;
  double score = 0.0;
};

struct RateFit {
  double C = 0.0;
  double gamma = 0.0;
  double r = 3.0;
  double p = 1.0;
  double rss = 0.0;
  bool clamped = false;
};

struct SelectionResult {
  std::string method;
  std::vector<SubsampleFit> fits;
  std::size_t b = 0;
  double lambda_b = 0.0;  // aggregated lambda_GCV(b)
  double p = 1.0;
  double r = 3.0;
  double gamma = 0.0;
  double lambda = 0.0;  // lambda for the full sample
  Eigen::VectorXd theta;
  std::optional<RateFit> rate;
  double p_scores[2] = {0.0, 0.0};
  double seconds = 0.0;

  SmoothingParams params(std::size_t n) const {
    return SmoothingParams::make(lambda * static_cast<double>(n), theta);
  }
};

/// Median of log values, exponentiated.
inline double log_median(std::vector<double> v) {
  detail::require(!v.empty(), "asp: median of an empty set");
  for (double& x : v) {
    detail::require(x > 0 && std::isfinite(x), "asp: median needs positive values");
    x = std::log(x);
  }
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  const double m = v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
  return std::exp(m);
}

namespace detail {

inline std::size_t basis_for(std::size_t rows, std::size_t null_dim, const AspConfig& cfg) {
  const auto q = basis_count(rows, cfg.basis_coef, cfg.basis_exp);
  return std::clamp(q, null_dim + 1, rows);
}

inline ComponentBlocks subsample_blocks(const Dataset& sub, const ModelSpec& spec,
                                        const AspConfig& cfg, std::uint64_t seed) {
  const auto q = basis_for(sub.size(), spec.null_dim(), cfg);
  return assemble_blocks(sub, spec, select_basis(sub.size(), q, seed, spec.null_dim()));
}

inline Dataset draw(const Dataset& data, std::size_t b, std::uint64_t seed) {
  const auto idx = sample_indices(data.size(), b, seed);
  return data.subset(idx);
}

/// Full GCV on `count` independent subsamples of size b. Failed fits are
/// dropped.
inline std::vector<SubsampleFit> fit_subsamples(const Dataset& data, const ModelSpec& spec,
                                                const AspConfig& cfg, std::size_t b,
                                                std::size_t count, std::uint64_t tag) {
  std::vector<std::optional<SubsampleFit>> slots(count);
  parallel_for(count, [&](std::size_t k) {
    try {
      const auto sub = draw(data, b, derive_seed(cfg.seed, tag, 2 * k));
      const auto blocks = subsample_blocks(sub, spec, cfg, derive_seed(cfg.seed, tag, 2 * k + 1));
      const auto g = full_gcv(blocks, sub.y, cfg.gcv);
      slots[k] = SubsampleFit{b, g.params.nlambda() / static_cast<double>(b), g.params.theta(),
                              g.score};
    } catch (const NumericalError&) {
    }
  });
  std::vector<SubsampleFit> out;
  for (auto& s : slots)
    if (s) out.push_back(std::move(*s));
  return out;
}

inline Eigen::VectorXd theta_median(const std::vector<SubsampleFit>& fits) {
  const auto S = fits.front().theta.size();
  Eigen::VectorXd out(S);
  for (Eigen::Index s = 0; s < S; ++s) {
    std::vector<double> v;
    for (const auto& f : fits) v.push_back(f.theta(s));
    out(s) = log_median(v);
  }
  return out;
}

constexpr std::uint64_t kUniformTag = 0xa5;
constexpr std::uint64_t kPTag = 0xb7;
constexpr std::uint64_t kRateTag = 0xc3;

}  // namespace detail

struct PChoice {
  double p = 1.0;
  double score[2] = {0.0, 0.0};
};

/// Chooses p in {1, 2} by GCV on one subsample of size B at the two
/// extrapolated lambdas; ties go to p = 1.
inline PChoice estimate_p(const Dataset& data, const ModelSpec& spec, double lambda_b,
                          const Eigen::VectorXd& theta_b, std::size_t b, const AspConfig& cfg) {
  const auto B = std::min<std::size_t>(
      data.size(), static_cast<std::size_t>(std::llround(cfg.B_factor * static_cast<double>(b))));
  const auto sub = detail::draw(data, B, derive_seed(cfg.seed, detail::kPTag, 0));
  const auto blocks = detail::subsample_blocks(sub, spec, cfg, derive_seed(cfg.seed, detail::kPTag, 1));
  PChoice out;
  for (int p = 1; p <= 2; ++p) {
    const double lam = extrapolate(lambda_b, static_cast<double>(b), static_cast<double>(B),
                                   rate_exponent(cfg.r, p));
    out.score[p - 1] = gcv_score(blocks, sub.y,
                                 SmoothingParams::make(lam * static_cast<double>(B), theta_b));
  }
  out.p = out.score[1] < out.score[0] ? 2.0 : 1.0;
  return out;
}

inline SelectionResult asp_uniform(const Dataset& data, const ModelSpec& spec,
                                   const AspConfig& cfg = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  SelectionResult out;
  out.method = "asp-u";
  out.r = cfg.r;
  out.b = subsample_size(data.size(), spec.null_dim(), cfg.b_coef);
  out.fits = detail::fit_subsamples(data, spec, cfg, out.b,
                                    static_cast<std::size_t>(cfg.subsamples), detail::kUniformTag);
  const std::size_t need = cfg.subsamples >= 2 ? 2 : 1;
  if (out.fits.size() < need) {
    throw NumericalError("asp: only " + std::to_string(out.fits.size()) +
                         " subsample fits succeeded");
  }
  std::vector<double> lams;
  for (const auto& f : out.fits) lams.push_back(f.lambda);
  out.lambda_b = log_median(lams);
  out.theta = detail::theta_median(out.fits);

  if (cfg.p_fixed) {
    out.p = *cfg.p_fixed;
  } else if (out.b < data.size()) {
    const auto pc = estimate_p(data, spec, out.lambda_b, out.theta, out.b, cfg);
    out.p = pc.p;
    out.p_scores[0] = pc.score[0];
    out.p_scores[1] = pc.score[1];
  } else {
    out.p = 1.0;
  }
  out.gamma = rate_exponent(out.r, out.p);
  out.lambda = extrapolate(out.lambda_b, static_cast<double>(out.b),
                           static_cast<double>(data.size()), out.gamma);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Least squares fit of log lambda = log C - gamma log b, with gamma clamped
/// to [1/3, 1) and a representative (r, p) on the constraint set.
inline RateFit fit_rate(const std::vector<double>& b, const std::vector<double>& lambda) {
  detail::require(b.size() == lambda.size() && b.size() >= 2, "asp: need at least two sizes");
  const auto N = static_cast<double>(b.size());
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < b.size(); ++k) {
    detail::require(b[k] > 0 && lambda[k] > 0, "asp: rate fit needs positive inputs");
    mx += std::log(b[k]) / N;
    my += std::log(lambda[k]) / N;
  }
  double sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < b.size(); ++k) {
    const double dx = std::log(b[k]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(lambda[k]) - my);
  }
  detail::require(sxx > 0, "asp: subsample sizes must differ");
  RateFit out;
  out.gamma = -sxy / sxx;
  const double lo = 1.0 / 3.0, hi = 1.0 - 1e-6;
  if (out.gamma < lo || out.gamma > hi) {
    out.gamma = std::clamp(out.gamma, lo, hi);
    out.clamped = true;
  }
  const double logC = my + out.gamma * mx;
  out.C = std::exp(logC);
  for (std::size_t k = 0; k < b.size(); ++k) {
    const double e = std::log(lambda[k]) - (logC - out.gamma * std::log(b[k]));
    out.rss += e * e;
  }
  const double p3 = 1.0 / out.gamma - 1.0 / 3.0;
  if (p3 >= 1.0 && p3 <= 2.0) {
    out.r = 3.0;
    out.p = p3;
  } else {
    out.p = p3 < 1.0 ? 1.0 : 2.0;
    out.r = out.gamma / (1.0 - out.p * out.gamma);
  }
  return out;
}

inline std::vector<std::size_t> subsample_ladder(std::size_t n, std::size_t null_dim,
                                                 const AspConfig& cfg) {
  const double n4 = std::pow(static_cast<double>(n), 0.25);
  const double lo = std::max<double>(std::llround(cfg.b_coef * n4), null_dim + 10);
  const double hi = std::min<double>(std::llround(cfg.b_max_coef * n4), n);
  detail::require(lo < hi, "asp: n = " + std::to_string(n) + " is too small for a subsample ladder");
  std::vector<std::size_t> out;
  for (int k = 0; k < cfg.sizes; ++k) {
    const double t = static_cast<double>(k) / (cfg.sizes - 1);
    const auto bk = static_cast<std::size_t>(std::llround(lo * std::pow(hi / lo, t)));
    if (out.empty() || bk > out.back()) out.push_back(bk);
  }
  return out;
}

inline SelectionResult asp_asymptotic(const Dataset& data, const ModelSpec& spec,
                                      const AspConfig& cfg = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  SelectionResult out;
  out.method = "asp-a";
  const auto ladder = subsample_ladder(data.size(), spec.null_dim(), cfg);
  std::vector<double> bs, lams;
  std::vector<SubsampleFit> last;
  for (std::size_t k = 0; k < ladder.size(); ++k) {
    auto fits = detail::fit_subsamples(data, spec, cfg, ladder[k],
                                       static_cast<std::size_t>(cfg.subsamples),
                                       detail::kRateTag + 0x100 * (k + 1));
    if (fits.empty()) continue;
    std::vector<double> v;
    for (const auto& f : fits) v.push_back(f.lambda);
    bs.push_back(static_cast<double>(ladder[k]));
    lams.push_back(log_median(v));
    out.fits.insert(out.fits.end(), fits.begin(), fits.end());
    last = std::move(fits);
  }
  if (bs.size() < 2) throw NumericalError("asp: fewer than two subsample sizes produced fits");
  const auto rate = fit_rate(bs, lams);
  out.rate = rate;
  out.b = static_cast<std::size_t>(bs.back());
  out.lambda_b = lams.back();
  out.gamma = rate.gamma;
  out.r = rate.r;
  out.p = rate.p;
  out.lambda = rate.C * std::pow(static_cast<double>(data.size()), -rate.gamma);
  out.theta = detail::theta_median(last);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace ssanova
