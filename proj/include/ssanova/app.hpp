#pragma once

// Command-line layer: CSV ingestion, fit documents, prediction and the
// simulation benchmark.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ssanova/ssanova.hpp"

namespace ssanova::app {

using json = nlohmann::json;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\"");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Numeric CSV with a header row. Row numbers in errors count data rows
/// from 1.
inline Table read_csv(std::istream& in, const std::string& what = "input") {
  Table t;
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) return t;
  t.header = split_csv_line(line);
  for (const auto& h : t.header) detail::require(!h.empty(), "ingest: empty column name in " + what);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    auto cells = split_csv_line(line);
    if (cells.size() < t.header.size()) cells.resize(t.header.size());
    detail::require(cells.size() == t.header.size(),
                    "ingest: row " + std::to_string(row) + " of " + what + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(t.header.size()));
    std::vector<double> vals;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const auto& c = cells[j];
      const bool missing = c.empty() || c == "NA" || c == "NaN" || c == "nan";
      detail::require(!missing, "ingest: missing value at row " + std::to_string(row) +
                                    ", column '" + t.header[j] + "'");
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(c, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      detail::require(used == c.size() && std::isfinite(v),
                      "ingest: non-numeric value '" + c + "' at row " + std::to_string(row) +
                          ", column '" + t.header[j] + "'");
      vals.push_back(v);
    }
    t.rows.push_back(std::move(vals));
  }
  return t;
}

inline Table read_csv_file(const std::string& path) {
  std::ifstream in(path);
  detail::require(static_cast<bool>(in), "ingest: cannot open '" + path + "'");
  return read_csv(in, "'" + path + "'");
}

struct DomainOverrides {
  std::set<std::string> discrete;
  std::set<std::string> continuous;
  std::set<std::string> drop;
};

/// Builds a Dataset: continuous columns are min-max scaled, integer columns
/// with at most 20 distinct values become discrete unless overridden.
inline Dataset ingest(const Table& t, const std::string& response, const DomainOverrides& ov = {}) {
  detail::require(!t.header.empty(), "ingest: empty file");
  detail::require(!t.rows.empty(), "ingest: no data rows");
  const auto rit = std::find(t.header.begin(), t.header.end(), response);
  detail::require(rit != t.header.end(), "ingest: response column '" + response + "' not found");
  for (const auto* names : {&ov.discrete, &ov.continuous, &ov.drop}) {
    for (const auto& nm : *names) {
      detail::require(std::find(t.header.begin(), t.header.end(), nm) != t.header.end(),
                      "ingest: unknown column '" + nm + "'");
    }
  }
  const auto ridx = static_cast<std::size_t>(rit - t.header.begin());
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < t.header.size(); ++j)
    if (j != ridx && !ov.drop.count(t.header[j])) cols.push_back(j);
  detail::require(!cols.empty(), "ingest: no predictor columns");

  Dataset d;
  d.response = response;
  const auto n = t.rows.size();
  d.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols.size()));
  d.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) d.y(static_cast<Eigen::Index>(i)) = t.rows[i][ridx];

  for (std::size_t k = 0; k < cols.size(); ++k) {
    const auto j = cols[k];
    const auto& name = t.header[j];
    std::set<double> distinct;
    bool integral = true;
    for (const auto& r : t.rows) {
      distinct.insert(r[j]);
      integral = integral && r[j] == std::round(r[j]);
    }
    bool discrete = integral && distinct.size() <= 20;
    if (ov.discrete.count(name)) discrete = true;
    if (ov.continuous.count(name)) discrete = false;
    PredictorDomain dom;
    if (discrete) {
      detail::require(distinct.size() >= 2, "ingest: column '" + name + "' has a single level");
      dom = PredictorDomain::discrete(static_cast<int>(distinct.size()),
                                      std::vector<double>(distinct.begin(), distinct.end()));
    } else {
      detail::require(*distinct.begin() < *distinct.rbegin(),
                      "ingest: column '" + name + "' is constant");
      dom = PredictorDomain::continuous(*distinct.begin(), *distinct.rbegin());
    }
    for (std::size_t i = 0; i < n; ++i) {
      d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = dom.scale(t.rows[i][j]);
    }
    d.domains.push_back(std::move(dom));
    d.names.push_back(name);
  }
  d.validate();
  return d;
}

inline json domain_json(const PredictorDomain& dom, const std::string& name) {
  json j{{"name", name}};
  if (dom.is_continuous()) {
    j["kind"] = "continuous";
    j["min"] = dom.min;
    j["max"] = dom.max;
  } else {
    j["kind"] = "discrete";
    j["levels"] = dom.level_values;
  }
  return j;
}

inline PredictorDomain domain_from(const json& j) {
  if (j.at("kind") == "continuous") {
    return PredictorDomain::continuous(j.at("min").get<double>(), j.at("max").get<double>());
  }
  auto lv = j.at("levels").get<std::vector<double>>();
  return PredictorDomain::discrete(static_cast<int>(lv.size()), lv);
}

inline std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

struct FitOutput {
  json document;
  FitResult fit;
  ModelSpec spec;
  MethodOutcome outcome;
};

/// Selects smoothing parameters, fits the full sample on q = round(coef *
/// n^exp) random basis points and builds the results document.
inline FitOutput run_fit(const RunConfig& cfg, const Dataset& data, const ModelSpec& spec) {
  data.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto n = data.size();
  const auto q = std::clamp(basis_count(n, cfg.asp.basis_coef, cfg.asp.basis_exp),
                            spec.null_dim() + 1, n);
  const auto basis = select_basis(n, q, derive_seed(cfg.asp.seed, 0x51), spec.null_dim());
  const auto blocks = assemble_blocks(data, spec, basis);
  FitOutput out;
  out.spec = spec;
  out.outcome = select_params(cfg.method, data, spec, blocks, cfg);
  const auto t1 = std::chrono::steady_clock::now();
  out.fit = fit(data, blocks, out.outcome.params);
  const auto t2 = std::chrono::steady_clock::now();

  const auto& sel = out.outcome.selection;
  json doc;
  doc["method"] = to_string(cfg.method);
  doc["response"] = data.response;
  doc["model"] = spec.formula();
  json preds = json::array();
  for (std::size_t j = 0; j < data.dims(); ++j) preds.push_back(domain_json(data.domains[j], data.names[j]));
  doc["predictors"] = preds;
  json terms = json::array();
  for (const auto& t : spec.penalized_terms) terms.push_back(t.describe());
  doc["penalized_terms"] = terms;
  doc["n"] = n;
  doc["q"] = q;
  doc["b"] = sel.b;
  doc["seed"] = cfg.asp.seed;
  doc["lambda"] = out.fit.params.nlambda() / static_cast<double>(n);
  doc["nlambda"] = out.fit.params.nlambda();
  doc["log10_nlambda"] = out.fit.params.log10_nlambda;
  doc["theta"] = to_vec(out.fit.params.theta());
  doc["log10_theta"] = to_vec(out.fit.params.log10_theta);
  doc["gamma"] = sel.gamma;
  doc["r"] = sel.r;
  doc["p"] = sel.p;
  doc["trace_A"] = out.fit.trace;
  doc["gcv"] = out.fit.gcv;
  json selection;
  selection["lambda_b"] = sel.lambda_b;
  json subs = json::array();
  for (const auto& f : sel.fits) {
    subs.push_back({{"b", f.b}, {"lambda", f.lambda}, {"theta", to_vec(f.theta)}, {"gcv", f.score}});
  }
  selection["subsamples"] = subs;
  if (cfg.method == Method::asp_u) selection["p_scores"] = {sel.p_scores[0], sel.p_scores[1]};
  if (sel.rate) {
    selection["rate"] = {{"C", sel.rate->C}, {"gamma", sel.rate->gamma}, {"r", sel.rate->r},
                         {"p", sel.rate->p}, {"rss", sel.rate->rss}, {"clamped", sel.rate->clamped}};
  }
  if (cfg.method == Method::gcv || cfg.method == Method::skip) {
    selection["iterations"] = out.outcome.iterations;
    selection["converged"] = out.outcome.converged;
  }
  doc["selection"] = selection;
  doc["coefficients"] = {{"d", to_vec(out.fit.d)}, {"c", to_vec(out.fit.c)}};
  json rows = json::array();
  for (Eigen::Index j = 0; j < out.fit.basis_rows.rows(); ++j) {
    rows.push_back(std::vector<double>(out.fit.basis_rows.row(j).data(),
                                       out.fit.basis_rows.row(j).data() + out.fit.basis_rows.cols()));
  }
  doc["basis"] = {{"indices", out.fit.basis.indices}, {"rows", rows}};
  doc["timings"] = {{"selection_seconds", std::chrono::duration<double>(t1 - t0).count()},
                    {"fit_seconds", std::chrono::duration<double>(t2 - t1).count()},
                    {"total_seconds", std::chrono::duration<double>(t2 - t0).count()}};
  out.document = std::move(doc);
  return out;
}

inline void write_fitted_csv(std::ostream& os, const Dataset& data, const FitResult& fit) {
  os << "row," << data.response << ",fitted\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < fit.fitted.size(); ++i) {
    os << (i + 1) << ',' << data.y(i) << ',' << fit.fitted(i) << '\n';
  }
}

struct LoadedFit {
  ModelSpec spec;
  FitResult fit;
  std::vector<std::string> names;
};

inline LoadedFit load_fit(const json& doc) {
  try {
    LoadedFit out;
    std::vector<PredictorDomain> doms;
    for (const auto& p : doc.at("predictors")) {
      doms.push_back(domain_from(p));
      out.names.push_back(p.at("name").get<std::string>());
    }
    out.spec = enumerate_terms(parse_effects(doc.at("model").get<std::string>()), doms);
    out.fit.params.log10_nlambda = doc.at("log10_nlambda").get<double>();
    out.fit.params.log10_theta = from_vec(doc.at("log10_theta").get<std::vector<double>>());
    out.fit.d = from_vec(doc.at("coefficients").at("d").get<std::vector<double>>());
    out.fit.c = from_vec(doc.at("coefficients").at("c").get<std::vector<double>>());
    const auto& rows = doc.at("basis").at("rows");
    out.fit.basis_rows.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(doms.size()));
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const auto r = rows[j].get<std::vector<double>>();
      detail::require(r.size() == doms.size(), "predict: basis row has the wrong width");
      for (std::size_t k = 0; k < r.size(); ++k) {
        out.fit.basis_rows(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = r[k];
      }
    }
    detail::require(static_cast<std::size_t>(out.fit.d.size()) == out.spec.null_dim() &&
                        out.fit.c.size() == out.fit.basis_rows.rows() &&
                        static_cast<std::size_t>(out.fit.params.log10_theta.size()) ==
                            out.spec.num_penalties(),
                    "predict: fit document is inconsistent with its model");
    return out;
  } catch (const json::exception& e) {
    throw InputError(std::string("predict: malformed fit document: ") + e.what());
  }
}

/// Predictions for every row of `t`, matching predictor columns by name.
inline Prediction run_predict(const LoadedFit& lf, const Table& t) {
  Prediction out;
  if (t.rows.empty()) {
    out.values.resize(0);
    return out;
  }
  std::vector<std::size_t> cols;
  for (const auto& nm : lf.names) {
    const auto it = std::find(t.header.begin(), t.header.end(), nm);
    detail::require(it != t.header.end(), "predict: column '" + nm + "' missing from input");
    cols.push_back(static_cast<std::size_t>(it - t.header.begin()));
  }
  RowMatrix raw(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t k = 0; k < cols.size(); ++k)
      raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = t.rows[i][cols[k]];
  return predict(lf.fit, lf.spec, raw);
}

inline void write_predictions(std::ostream& os, const Prediction& p) {
  os << "prediction,out_of_range\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < p.values.size(); ++i) {
    os << p.values(i) << ',' << (p.out_of_range[static_cast<std::size_t>(i)] ? "true" : "false") << '\n';
  }
}

inline void write_dataset_csv(std::ostream& os, const Dataset& d) {
  for (std::size_t j = 0; j < d.dims(); ++j) os << d.names[j] << ',';
  os << d.response << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.X.cols(); ++j)
      os << d.domains[static_cast<std::size_t>(j)].unscale(d.X(i, j)) << ',';
    os << d.y(i) << '\n';
  }
}

struct BenchRow {
  std::string scenario;
  std::size_t n = 0;
  double snr = 0.0;
  std::string method;
  std::string replicate;  // index, or "summary"
  double loss = 0.0;
  double log_re = 0.0;
  double seconds = 0.0;  // selection time; the shared final fit is excluded
};

struct BenchPlan {
  std::vector<std::string> scenarios;
  std::vector<std::size_t> sizes;
  std::vector<double> snrs;
  std::vector<Method> methods;
  std::size_t replicates = 1;
  std::uint64_t seed = 1;
};

inline double median(std::vector<double> v) {
  detail::require(!v.empty(), "bench: median of empty set");
  std::sort(v.begin(), v.end());
  const auto h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// One replicate: simulate, fit the full-GCV benchmark and every requested
/// method on a shared basis, and compare against the truth.
inline std::vector<BenchRow> bench_replicate(const RunConfig& base, const std::string& id,
                                             std::size_t n, double snr, std::size_t rep,
                                             const std::vector<Method>& methods,
                                             std::uint64_t seed) {
  const auto sim = gen_data(id, n, snr, derive_seed(seed, 1));
  const auto spec = make_scenario(id).spec();
  const auto q = std::clamp(basis_count(n, base.asp.basis_coef, base.asp.basis_exp),
                            spec.null_dim() + 1, n);
  const auto blocks = assemble_blocks(sim.data, spec, select_basis(n, q, derive_seed(seed, 2), spec.null_dim()));
  RunConfig cfg = base;
  cfg.asp.seed = derive_seed(seed, 3);

  std::map<Method, std::pair<Eigen::VectorXd, double>> fits;
  auto run = [&](Method m) {
    if (fits.count(m)) return;
    const auto o = select_params(m, sim.data, spec, blocks, cfg);
    fits[m] = {fit(sim.data, blocks, o.params).fitted, o.selection.seconds};
  };
  run(Method::gcv);
  std::vector<BenchRow> rows;
  for (auto m : methods) {
    run(m);
    BenchRow r;
    r.scenario = id;
    r.n = n;
    r.snr = snr;
    r.method = to_string(m);
    r.replicate = std::to_string(rep);
    r.loss = loss(fits[m].first, sim.eta);
    r.log_re = m == Method::gcv ? 0.0
                                : relative_efficacy(fits[m].first, fits[Method::gcv].first, sim.eta).log_re;
    r.seconds = fits[m].second;
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<BenchRow> run_bench(const RunConfig& base, const BenchPlan& plan) {
  detail::require(!plan.scenarios.empty() && !plan.sizes.empty() && !plan.snrs.empty() &&
                      !plan.methods.empty() && plan.replicates >= 1,
                  "bench: empty scenario, size, snr, method or replicate list");
  for (const auto& s : plan.scenarios) make_scenario(s);
  struct Cell {
    std::size_t sc, ni, si;
  };
  std::vector<Cell> cells;
  for (std::size_t a = 0; a < plan.scenarios.size(); ++a)
    for (std::size_t b = 0; b < plan.sizes.size(); ++b)
      for (std::size_t c = 0; c < plan.snrs.size(); ++c) cells.push_back({a, b, c});

  const auto jobs = cells.size() * plan.replicates;
  std::vector<std::vector<BenchRow>> results(jobs);
  parallel_for(jobs, [&](std::size_t k) {
    const auto& cell = cells[k / plan.replicates];
    const auto rep = k % plan.replicates;
    const auto& id = plan.scenarios[cell.sc];
    std::uint64_t tag = 0;
    for (char ch : id) tag = tag * 131 + static_cast<unsigned char>(ch);
    const auto seed = derive_seed(derive_seed(derive_seed(plan.seed, tag), plan.sizes[cell.ni]),
                                  cell.si * 1000003ULL + rep);
    results[k] = bench_replicate(base, id, plan.sizes[cell.ni], plan.snrs[cell.si], rep,
                                 plan.methods, seed);
  });

  std::vector<BenchRow> out;
  for (const auto& rs : results) out.insert(out.end(), rs.begin(), rs.end());
  std::vector<BenchRow> summaries;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (auto m : plan.methods) {
      std::vector<double> l, lr, sec;
      BenchRow s;
      for (std::size_t rep = 0; rep < plan.replicates; ++rep) {
        for (const auto& r : results[c * plan.replicates + rep]) {
          if (r.method != to_string(m)) continue;
          l.push_back(r.loss);
          lr.push_back(r.log_re);
          sec.push_back(r.seconds);
          s = r;
        }
      }
      s.replicate = "summary";
      s.loss = median(l);
      s.log_re = median(lr);
      s.seconds = median(sec);
      summaries.push_back(s);
    }
  }
  out.insert(out.end(), summaries.begin(), summaries.end());
  return out;
}

inline void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << "scenario,n,snr,method,replicate,loss,log_re,wall_time_seconds\n" << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.scenario << ',' << r.n << ',' << r.snr << ',' << r.method << ',' << r.replicate << ','
       << r.loss << ',' << r.log_re << ',' << r.seconds << '\n';
  }
}

}  // namespace ssanova::app
