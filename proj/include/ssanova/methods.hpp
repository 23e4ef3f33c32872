#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssanova/asp.hpp"
#include "ssanova/dataset.hpp"
#include "ssanova/gcv.hpp"
#include "ssanova/model.hpp"
#include "ssanova/solver.hpp"

namespace ssanova {

enum class Method { gcv, skip, asp_u, asp_a, order };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::gcv: return "gcv";
    case Method::skip: return "skip";
    case Method::asp_u: return "asp-u";
    case Method::asp_a: return "asp-a";
    case Method::order: return "order";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (auto m : {Method::gcv, Method::skip, Method::asp_u, Method::asp_a, Method::order})
    if (to_string(m) == s) return m;
  throw InputError("method: unknown method '" + s + "' (expected gcv, skip, asp-u, asp-a, order)");
}

struct RunConfig {
  AspConfig asp;
  Method method = Method::asp_u;
  double order_r = 3.0;
  double order_p = 1.0;
  double order_C = 1.0;
  int gcv_max_iter = 30;  // benchmark cap, e.g. 1 for one-iteration GCV
};

struct MethodOutcome {
  SelectionResult selection;
  SmoothingParams params;
  double score = 0.0;  // GCV at the selected parameters on the full sample
  int iterations = 0;
  bool converged = true;
};

/// Selects smoothing parameters for the full sample. `blocks` holds the
/// full-sample kernel blocks used by the final fit.
inline MethodOutcome select_params(Method m, const Dataset& data, const ModelSpec& spec,
                                   const ComponentBlocks& blocks, const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const double n = static_cast<double>(data.size());
  MethodOutcome out;
  out.selection.method = to_string(m);
  switch (m) {
    case Method::gcv:
    case Method::skip: {
      FullGcvOptions opt = cfg.asp.gcv;
      opt.max_iter = cfg.gcv_max_iter;
      const auto g = m == Method::gcv ? full_gcv(blocks, data.y, opt)
                                      : skip_select(blocks, data.y, opt.search);
      out.params = g.params;
      out.score = g.score;
      out.iterations = g.iterations;
      out.converged = g.converged;
      out.selection.lambda = g.params.nlambda() / n;
      out.selection.theta = g.params.theta();
      out.selection.b = data.size();
      out.selection.lambda_b = out.selection.lambda;
      break;
    }
    case Method::asp_u:
    case Method::asp_a: {
      out.selection = m == Method::asp_u ? asp_uniform(data, spec, cfg.asp)
                                         : asp_asymptotic(data, spec, cfg.asp);
      out.params = out.selection.params(data.size());
      break;
    }
    case Method::order: {
      out.selection.r = cfg.order_r;
      out.selection.p = cfg.order_p;
      out.selection.gamma = rate_exponent(cfg.order_r, cfg.order_p);
      out.selection.lambda = order_based(n, cfg.order_r, cfg.order_p, cfg.order_C);
      out.selection.theta = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(spec.num_penalties()));
      out.params = out.selection.params(data.size());
      break;
    }
  }
  out.selection.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace ssanova
