#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssanova/errors.hpp"
#include "ssanova/kernel.hpp"

namespace ssanova {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Predictors on the kernel scale plus the response.
struct Dataset {
  RowMatrix X;  // n x d; continuous in [0,1], discrete as levels 1..K
  Eigen::VectorXd y;
  std::vector<PredictorDomain> domains;
  std::vector<std::string> names;
  std::string response = "y";

  std::size_t size() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(X.cols()); }

  std::span<const double> row(std::size_t i) const {
    return {X.data() + i * dims(), dims()};
  }

  void validate() const {
    detail::require(X.rows() == y.size(), "dataset: X and y have different row counts");
    detail::require(static_cast<std::size_t>(X.cols()) == domains.size(),
                    "dataset: one domain per predictor column is required");
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      detail::require(std::isfinite(y(i)), "dataset: missing or non-finite response at row " +
                                               std::to_string(i + 1));
      for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double v = X(i, j);
        const auto& dom = domains[static_cast<std::size_t>(j)];
        const bool ok = dom.is_continuous()
                            ? (v >= 0.0 && v <= 1.0)
                            : (v == std::round(v) && v >= 1 && v <= dom.levels);
        detail::require(ok, "dataset: value at row " + std::to_string(i + 1) + ", column " +
                                std::to_string(j + 1) + " does not conform to its domain");
      }
    }
  }

  Dataset subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
    out.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      out.X.row(static_cast<Eigen::Index>(k)) = X.row(static_cast<Eigen::Index>(rows[k]));
      out.y(static_cast<Eigen::Index>(k)) = y(static_cast<Eigen::Index>(rows[k]));
    }
    out.domains = domains;
    out.names = names;
    out.response = response;
    return out;
  }
};

/// Counter-based seed derivation (splitmix64 finalizer), so that streams for
/// (master seed, tag, index) do not depend on execution order.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag, std::uint64_t index = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(master) ^ tag) ^ index);
}

/// k distinct indices from [0, n), uniform without replacement, sorted.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  detail::require(k <= n, "sampling: cannot draw " + std::to_string(k) + " of " +
                              std::to_string(n) + " without replacement");
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace ssanova
