#pragma once

// ANOVA term enumeration: expands requested main effects and interactions
// into null-space basis functions and penalized reproducing-kernel terms.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssanova/errors.hpp"
#include "ssanova/kernel.hpp"

namespace ssanova {

using Effect = std::vector<std::size_t>;

struct Factor {
  std::size_t predictor = 0;
  Subspace label = Subspace::smooth;

  friend bool operator==(const Factor&, const Factor&) = default;
};

/// One tensor-product subspace. Factors not listed are at their constant
/// subspace. A term without any smooth factor is a null-space function.
struct AnovaTerm {
  std::vector<Factor> factors;

  bool penalized() const {
    return std::any_of(factors.begin(), factors.end(),
                       [](const Factor& f) { return f.label == Subspace::smooth; });
  }

  std::string describe() const {
    if (factors.empty()) return "const";
    std::string out;
    for (std::size_t i = 0; i < factors.size(); ++i) {
      if (i) out += "*";
      out += "x" + std::to_string(factors[i].predictor + 1) + "[" +
             to_string(factors[i].label) + "]";
    }
    return out;
  }

  friend bool operator==(const AnovaTerm&, const AnovaTerm&) = default;
};

struct ModelSpec {
  std::vector<PredictorDomain> domains;
  std::vector<Effect> effects;
  /// Null-space functions; the first is always the constant.
  std::vector<AnovaTerm> null_terms;
  /// Penalized terms, one smoothing parameter theta each.
  std::vector<AnovaTerm> penalized_terms;

  std::size_t null_dim() const { return null_terms.size(); }
  std::size_t num_penalties() const { return penalized_terms.size(); }
  std::size_t dims() const { return domains.size(); }

  /// Effects in the command-line grammar, e.g. "1,2,1:2" (1-based).
  std::string formula() const {
    std::string out;
    for (std::size_t e = 0; e < effects.size(); ++e) {
      if (e) out += ",";
      for (std::size_t k = 0; k < effects[e].size(); ++k) {
        if (k) out += ":";
        out += std::to_string(effects[e][k] + 1);
      }
    }
    return out;
  }
};

namespace detail {

inline bool term_less(const AnovaTerm& a, const AnovaTerm& b) {
  const auto key = [](const AnovaTerm& t) {
    std::vector<std::size_t> idx;
    std::vector<int> lab;
    for (const auto& f : t.factors) {
      idx.push_back(f.predictor);
      lab.push_back(static_cast<int>(f.label));
    }
    return std::make_pair(idx, lab);
  };
  return key(a) < key(b);
}

inline double factor_kernel(const PredictorDomain& dom, Subspace label, double a,
                            double b) {
  if (dom.is_continuous()) return kernel::cubic_part(label, a, b);
  return kernel::discrete_part(label, dom.levels, static_cast<int>(std::lround(a)),
                               static_cast<int>(std::lround(b)));
}

}  // namespace detail

/// Expands effects into label combinations. Continuous factors take labels
/// {01, 1}, discrete factors {1}; all-01 combinations go to the null space.
inline ModelSpec enumerate_terms(std::vector<Effect> effects,
                                 std::vector<PredictorDomain> domains) {
  detail::require(!domains.empty(), "model: no predictors");
  for (const auto& d : domains) d.validate();
  detail::require(!effects.empty(), "model: no effects requested");

  for (auto& e : effects) {
    detail::require(!e.empty(), "model: empty effect");
    std::sort(e.begin(), e.end());
    detail::require(std::adjacent_find(e.begin(), e.end()) == e.end(),
                    "model: predictor repeated within an effect");
    detail::require(e.back() < domains.size(),
                    "model: effect references predictor " + std::to_string(e.back() + 1) +
                        " but only " + std::to_string(domains.size()) + " exist");
  }
  {
    auto sorted = effects;
    std::sort(sorted.begin(), sorted.end());
    detail::require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
                    "model: duplicate effect");
  }

  ModelSpec spec;
  spec.domains = std::move(domains);
  spec.effects = effects;

  std::vector<AnovaTerm> null_terms, penalized;
  for (const auto& e : effects) {
    std::vector<std::vector<Subspace>> options;
    for (auto j : e) {
      if (spec.domains[j].is_continuous()) {
        options.push_back({Subspace::parametric, Subspace::smooth});
      } else {
        options.push_back({Subspace::smooth});
      }
    }
    std::vector<std::size_t> pick(e.size(), 0);
    for (bool more = true; more;) {
      AnovaTerm term;
      for (std::size_t k = 0; k < e.size(); ++k) term.factors.push_back({e[k], options[k][pick[k]]});
      (term.penalized() ? penalized : null_terms).push_back(std::move(term));
      more = false;
      for (std::size_t k = e.size(); k-- > 0;) {
        if (++pick[k] < options[k].size()) {
          more = true;
          break;
        }
        pick[k] = 0;
      }
    }
  }
  std::sort(null_terms.begin(), null_terms.end(), detail::term_less);
  std::sort(penalized.begin(), penalized.end(), detail::term_less);

  spec.null_terms.push_back(AnovaTerm{});
  spec.null_terms.insert(spec.null_terms.end(), null_terms.begin(), null_terms.end());
  spec.penalized_terms = std::move(penalized);
  return spec;
}

/// Main effects for every predictor.
inline std::vector<Effect> additive_effects(std::size_t d) {
  std::vector<Effect> out;
  for (std::size_t j = 0; j < d; ++j) out.push_back({j});
  return out;
}

/// Main effects plus all two-way interactions.
inline std::vector<Effect> two_way_effects(std::size_t d) {
  auto out = additive_effects(d);
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t k = j + 1; k < d; ++k) out.push_back({j, k});
  return out;
}

/// Parses "1,2,3,1:2,2:3" into zero-based effects.
inline std::vector<Effect> parse_effects(const std::string& text) {
  std::vector<Effect> out;
  std::stringstream terms(text);
  std::string term;
  while (std::getline(terms, term, ',')) {
    detail::require(!term.empty(), "model: empty term in '" + text + "'");
    Effect e;
    std::stringstream parts(term);
    std::string part;
    while (std::getline(parts, part, ':')) {
      std::size_t used = 0;
      long v = 0;
      try {
        v = std::stol(part, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      detail::require(used == part.size() && !part.empty() && v >= 1,
                      "model: bad predictor index '" + part + "' in '" + text + "'");
      e.push_back(static_cast<std::size_t>(v - 1));
    }
    out.push_back(std::move(e));
  }
  detail::require(!out.empty(), "model: empty model formula");
  return out;
}

/// Kernel of a penalized term: product of factor kernels.
inline double term_kernel(const ModelSpec& spec, const AnovaTerm& term,
                          std::span<const double> row, std::span<const double> row2) {
  if (!term.penalized()) {
    throw InputError("model: term_kernel called on a null-space term " + term.describe());
  }
  double v = 1.0;
  for (const auto& f : term.factors) {
    v *= detail::factor_kernel(spec.domains[f.predictor], f.label, row[f.predictor],
                               row2[f.predictor]);
  }
  return v;
}

/// Evaluates every null-space function at a (scaled) row.
inline Eigen::VectorXd null_basis(const ModelSpec& spec, std::span<const double> row) {
  detail::require(row.size() == spec.dims(), "model: row has wrong number of predictors");
  Eigen::VectorXd out(spec.null_dim());
  for (std::size_t nu = 0; nu < spec.null_dim(); ++nu) {
    double v = 1.0;
    for (const auto& f : spec.null_terms[nu].factors) {
      v *= kernel::bernoulli(1, row[f.predictor]);
    }
    out(static_cast<Eigen::Index>(nu)) = v;
  }
  return out;
}

}  // namespace ssanova
