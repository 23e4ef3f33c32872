#pragma once

// Reproducing kernels for tensor-product cubic smoothing splines on [0,1]
// and for nominal factors on {1,...,K}.

#include <cmath>
#include <string>
#include <vector>

#include "ssanova/errors.hpp"

namespace ssanova {

enum class DomainKind { continuous, discrete };

/// Where one predictor lives. Continuous predictors are min-max rescaled
/// to [0,1]; discrete predictors are mapped onto levels 1..K.
struct PredictorDomain {
  DomainKind kind = DomainKind::continuous;
  double min = 0.0;
  double max = 1.0;
  int levels = 0;
  /// Raw values of the levels in increasing order (level k is values[k-1]).
  std::vector<double> level_values;

  static PredictorDomain continuous(double lo, double hi) {
    PredictorDomain d;
    d.kind = DomainKind::continuous;
    d.min = lo;
    d.max = hi;
    d.validate();
    return d;
  }

  static PredictorDomain discrete(int K, std::vector<double> values = {}) {
    PredictorDomain d;
    d.kind = DomainKind::discrete;
    d.levels = K;
    if (values.empty()) {
      for (int k = 1; k <= K; ++k) values.push_back(k);
    }
    d.level_values = std::move(values);
    d.validate();
    return d;
  }

  bool is_continuous() const { return kind == DomainKind::continuous; }

  void validate() const {
    if (is_continuous()) {
      detail::require(std::isfinite(min) && std::isfinite(max) && min < max,
                      "kernel: continuous domain requires min < max");
    } else {
      detail::require(levels >= 2, "kernel: discrete domain requires K >= 2");
      detail::require(static_cast<int>(level_values.size()) == levels,
                      "kernel: discrete domain level table has wrong size");
    }
  }

  /// Maps a raw value to the kernel scale. Continuous values outside the
  /// training range are clamped to [0,1] and reported through `clamped`.
  double scale(double raw, bool* clamped = nullptr) const {
    if (clamped) *clamped = false;
    if (is_continuous()) {
      double t = (raw - min) / (max - min);
      if (t < 0.0 || t > 1.0) {
        if (clamped) *clamped = true;
        t = t < 0.0 ? 0.0 : 1.0;
      }
      return t;
    }
    for (int k = 0; k < levels; ++k) {
      if (level_values[k] == raw) return k + 1;
    }
    throw InputError("kernel: value " + std::to_string(raw) +
                     " is not a known level of a discrete predictor");
  }

  double unscale(double t) const {
    if (is_continuous()) return min + t * (max - min);
    return level_values.at(static_cast<std::size_t>(std::lround(t)) - 1);
  }
};

/// Subspace of one factor in a tensor-product term. Continuous predictors
/// decompose as H00 (constant) + H01 (linear, k1) + H1 (smooth); discrete
/// predictors as H0 (constant) + H1 (contrasts).
enum class Subspace { constant, parametric, smooth };

inline std::string to_string(Subspace s) {
  switch (s) {
    case Subspace::constant: return "00";
    case Subspace::parametric: return "01";
    case Subspace::smooth: return "1";
  }
  return "?";
}

namespace kernel {

inline void check_unit(double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw InputError("kernel: argument " + std::to_string(t) +
                     " outside [0,1]; was the predictor rescaled?");
  }
}

inline double k1(double t) { return t - 0.5; }

inline double k2(double t) {
  const double a = t - 0.5;
  return (a * a - 1.0 / 12.0) / 2.0;
}

inline double k4(double t) {
  const double a2 = (t - 0.5) * (t - 0.5);
  return (a2 * a2 - a2 / 2.0 + 7.0 / 240.0) / 24.0;
}

/// Scaled Bernoulli polynomial k_order(t) for order in {1, 2, 4}.
inline double bernoulli(int order, double t) {
  check_unit(t);
  switch (order) {
    case 1: return k1(t);
    case 2: return k2(t);
    case 4: return k4(t);
    default:
      throw InputError("kernel: scaled Bernoulli order must be 1, 2 or 4");
  }
}

/// Cubic spline kernel of the H01 or H1 subspace. k4 is taken at |x - x2|,
/// which keeps the kernel symmetric.
inline double cubic_part(Subspace label, double x, double x2) {
  check_unit(x);
  check_unit(x2);
  switch (label) {
    case Subspace::parametric: return k1(x) * k1(x2);
    case Subspace::smooth: return k2(x) * k2(x2) - k4(std::abs(x - x2));
    case Subspace::constant: return 1.0;
  }
  return 0.0;
}

inline double discrete_part(Subspace label, int K, int x, int x2) {
  detail::require(K >= 2, "kernel: discrete kernel needs K >= 2");
  detail::require(x >= 1 && x <= K && x2 >= 1 && x2 <= K,
                  "kernel: discrete level out of range");
  switch (label) {
    case Subspace::constant: return 1.0 / K;
    case Subspace::smooth: return (x == x2 ? 1.0 : 0.0) - 1.0 / K;
    case Subspace::parametric:
      throw InputError("kernel: discrete predictors have no parametric subspace");
  }
  return 0.0;
}

}  // namespace kernel
}  // namespace ssanova
