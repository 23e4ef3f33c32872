#include <cstdint>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssanova/app.hpp"

namespace {

using namespace ssanova;

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  detail::require(static_cast<bool>(os), "io: cannot write '" + path + "'");
  return os;
}

template <class T>
std::vector<T> parse_list(const std::string& text, const std::string& what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = app::trim(item);
    if (item.empty()) continue;
    if constexpr (std::is_same_v<T, std::string>) {
      out.push_back(item);
    } else {
      std::stringstream is(item);
      T v{};
      is >> v;
      detail::require(!is.fail() && is.eof(), "cli: bad " + what + " value '" + item + "'");
      out.push_back(v);
    }
  }
  detail::require(!out.empty(), "cli: empty " + what + " list");
  return out;
}

std::set<std::string> name_set(const std::string& text) {
  std::set<std::string> out;
  if (text.empty()) return out;
  for (auto& s : parse_list<std::string>(text, "column")) out.insert(s);
  return out;
}

std::string default_fitted_path(const std::string& out) {
  const auto dot = out.rfind('.');
  const auto slash = out.rfind('/');
  const bool has_ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
  return (has_ext ? out.substr(0, dot) : out) + ".fitted.csv";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Smoothing spline ANOVA with asympirical smoothing-parameter selection"};
  cli.require_subcommand(1);

  RunConfig cfg;
  std::uint64_t seed = 1;
  std::string p_text = "auto";

  auto add_selection = [&](CLI::App* sc) {
    sc->add_option("--b-coef", cfg.asp.b_coef, "subsample size coefficient, b = coef * n^(1/4)");
    sc->add_option("--b-max-coef", cfg.asp.b_max_coef, "largest subsample coefficient (asp-a)");
    sc->add_option("--sizes", cfg.asp.sizes, "number of subsample sizes (asp-a)");
    sc->add_option("--r", cfg.asp.r, "rate parameter r");
    sc->add_option("--p", p_text, "smoothness parameter p: auto, or a value in [1, 2]");
    sc->add_option("--subsamples", cfg.asp.subsamples, "subsamples per size");
    sc->add_option("--basis-coef", cfg.asp.basis_coef, "basis count coefficient");
    sc->add_option("--basis-exp", cfg.asp.basis_exp, "basis count exponent");
    sc->add_option("--order-c", cfg.order_C, "constant C of the order-based rule");
    sc->add_option("--gcv-max-iter", cfg.gcv_max_iter, "theta iterations of full GCV");
    sc->add_option("--seed", seed, "random seed");
  };

  auto* sim = cli.add_subcommand("simulate", "generate a simulation scenario as CSV");
  std::string scenario, sim_out, truth_out;
  std::size_t sim_n = 1000;
  double snr = 5.0;
  sim->add_option("--scenario", scenario, "u1, u2, u3, m1, m2, m3 or m4")->required();
  sim->add_option("--n", sim_n, "sample size")->required();
  sim->add_option("--snr", snr, "signal to noise ratio")->required();
  sim->add_option("--seed", seed, "random seed");
  sim->add_option("--out", sim_out, "output CSV")->required();
  sim->add_option("--truth-out", truth_out, "optional CSV of the true function values");

  auto* fitc = cli.add_subcommand("fit", "select smoothing parameters and fit");
  std::string data_path, response, model, method = "asp-u", fit_out, fitted_out;
  std::string discrete_cols, continuous_cols, drop_cols;
  fitc->add_option("--data", data_path, "input CSV with a header row")->required();
  fitc->add_option("--response", response, "response column")->required();
  fitc->add_option("--model", model, "terms such as 1,2,1:2 (1-based predictor indices)")->required();
  fitc->add_option("--method", method, "gcv, skip, asp-u, asp-a or order");
  fitc->add_option("--discrete", discrete_cols, "comma-separated columns forced discrete");
  fitc->add_option("--continuous", continuous_cols, "comma-separated columns forced continuous");
  fitc->add_option("--drop", drop_cols, "comma-separated columns to ignore");
  fitc->add_option("--out", fit_out, "output JSON fit document")->required();
  fitc->add_option("--fitted", fitted_out, "output CSV of fitted values");
  add_selection(fitc);

  auto* pred = cli.add_subcommand("predict", "evaluate a stored fit on new rows");
  std::string pred_fit, pred_data, pred_out;
  pred->add_option("--fit", pred_fit, "fit document from the fit command")->required();
  pred->add_option("--data", pred_data, "CSV holding the predictor columns")->required();
  pred->add_option("--out", pred_out, "output CSV")->required();

  auto* bench = cli.add_subcommand("bench", "simulation benchmark against full GCV");
  std::string sc_list, n_list, snr_list, method_list = "gcv,asp-u", bench_out;
  std::size_t reps = 1;
  bench->add_option("--scenario", sc_list, "comma-separated scenario ids")->required();
  bench->add_option("--n", n_list, "comma-separated sample sizes")->required();
  bench->add_option("--snr", snr_list, "comma-separated signal to noise ratios")->required();
  bench->add_option("--methods", method_list, "comma-separated methods");
  bench->add_option("--replicates", reps, "replicates per cell");
  bench->add_option("--out", bench_out, "output CSV")->required();
  add_selection(bench);

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return 2;
  }

  try {
    cfg.asp.seed = seed;
    if (p_text != "auto") {
      std::stringstream is(p_text);
      double p = 0;
      is >> p;
      detail::require(!is.fail() && is.eof(), "cli: --p must be 'auto' or a number");
      cfg.asp.p_fixed = p;
      cfg.order_p = p;
    }
    cfg.order_r = cfg.asp.r;

    if (*sim) {
      const auto s = gen_data(scenario, sim_n, snr, seed);
      auto os = open_out(sim_out);
      app::write_dataset_csv(os, s.data);
      if (!truth_out.empty()) {
        auto ts = open_out(truth_out);
        ts << "eta\n" << std::setprecision(17);
        for (Eigen::Index i = 0; i < s.eta.size(); ++i) ts << s.eta(i) << '\n';
      }
    } else if (*fitc) {
      cfg.method = parse_method(method);
      cfg.asp.validate();
      app::DomainOverrides ov{name_set(discrete_cols), name_set(continuous_cols), name_set(drop_cols)};
      const auto data = app::ingest(app::read_csv_file(data_path), response, ov);
      const auto spec = enumerate_terms(parse_effects(model), data.domains);
      const auto res = app::run_fit(cfg, data, spec);
      auto os = open_out(fit_out);
      os << res.document.dump(2) << '\n';
      auto fs = open_out(fitted_out.empty() ? default_fitted_path(fit_out) : fitted_out);
      app::write_fitted_csv(fs, data, res.fit);
      std::cerr << "fit: method " << method << ", lambda " << res.document["lambda"].get<double>()
                << ", trace " << res.fit.trace << ", gcv " << res.fit.gcv << '\n';
    } else if (*pred) {
      std::ifstream fin(pred_fit);
      detail::require(static_cast<bool>(fin), "predict: cannot open '" + pred_fit + "'");
      app::json doc;
      try {
        fin >> doc;
      } catch (const app::json::exception& e) {
        throw InputError(std::string("predict: fit document is not valid JSON: ") + e.what());
      }
      const auto lf = app::load_fit(doc);
      const auto p = app::run_predict(lf, app::read_csv_file(pred_data));
      auto os = open_out(pred_out);
      app::write_predictions(os, p);
      const auto flagged = std::count(p.out_of_range.begin(), p.out_of_range.end(), true);
      if (flagged) std::cerr << "predict: warning: " << flagged << " row(s) outside the training range were clamped\n";
    } else if (*bench) {
      app::BenchPlan plan;
      plan.scenarios = parse_list<std::string>(sc_list, "scenario");
      plan.sizes = parse_list<std::size_t>(n_list, "n");
      plan.snrs = parse_list<double>(snr_list, "snr");
      for (const auto& m : parse_list<std::string>(method_list, "method")) plan.methods.push_back(parse_method(m));
      plan.replicates = reps;
      plan.seed = seed;
      cfg.asp.validate();
      const auto rows = app::run_bench(cfg, plan);
      auto os = open_out(bench_out);
      app::write_bench_csv(os, rows);
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
