#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace ssanova;

namespace {

Dataset sine_data(std::size_t n, double snr, std::uint64_t seed) {
  Dataset d;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  d.X.resize(static_cast<Eigen::Index>(n), 1);
  Eigen::VectorXd eta(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    d.X(i, 0) = u(rng);
    eta(i) = std::sin(2 * M_PI * d.X(i, 0));
  }
  std::normal_distribution<double> e(0, sample_sd(eta) / snr);
  d.y = eta;
  for (auto& v : d.y) v += e(rng);
  d.domains = {PredictorDomain::continuous(0, 1)};
  d.names = {"x1"};
  return d;
}

}  // namespace

TEST(Asp, SubsampleSizes) {
  EXPECT_EQ(subsample_size(20000, 2), 595u);
  EXPECT_EQ(subsample_size(1000000, 2), 1581u);
  EXPECT_EQ(subsample_size(160000, 2), 1000u);
  EXPECT_EQ(subsample_size(30, 2), 30u);
  EXPECT_THROW(subsample_size(5, 2), InputError);
}

TEST(Asp, ExtrapolationArithmetic) {
  const double lam = extrapolate(1e-3, 595, 20000, rate_exponent(3, 1));
  EXPECT_NEAR(lam, 7.17e-5, 0.01e-5);
  EXPECT_DOUBLE_EQ(extrapolate(1e-3, 700, 700, 0.75), 1e-3);
  EXPECT_DOUBLE_EQ(rate_exponent(3, 2), 3.0 / 7.0);
  EXPECT_NEAR(lam * std::pow(20000.0 / 595.0, 0.75), 1e-3, 1e-18);
  double prev = 1.0;
  for (double n : {1e3, 1e4, 1e5, 1e6}) {
    const double v = extrapolate(1e-3, 500, n, 0.6);
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(Asp, PCandidates) {
  EXPECT_NEAR(extrapolate(1e-3, 595, 1190, rate_exponent(3, 1)), 5.946e-4, 0.001e-4);
  EXPECT_NEAR(extrapolate(1e-3, 595, 1190, rate_exponent(3, 2)), 7.43e-4, 0.01e-4);
}

TEST(Asp, OrderBased) {
  EXPECT_DOUBLE_EQ(order_based(10000, 3, 1), 1e-3);
  EXPECT_DOUBLE_EQ(order_based(1, 3, 1, 0.25), 0.25);
  EXPECT_NEAR(order_based(512, 4, 2), 0.0625, 1e-15);
  EXPECT_THROW(order_based(100, 0.5, 1), InputError);
  EXPECT_THROW(order_based(100, 3, 2.5), InputError);
}

TEST(Asp, RateFitRecovery) {
  for (auto [C, g] : {std::pair{0.37, 0.6}, std::pair{1e-2, 0.75}}) {
    std::vector<double> b, l;
    for (int k = 0; k < 10; ++k) {
      b.push_back(500.0 * std::pow(2.4, k / 9.0));
      l.push_back(C * std::pow(b.back(), -g));
    }
    const auto r = fit_rate(b, l);
    EXPECT_NEAR(r.C, C, 1e-6 * C);
    EXPECT_NEAR(r.gamma, g, 1e-6);
    EXPECT_FALSE(r.clamped);
    EXPECT_NEAR(r.r / (r.p * r.r + 1), g, 1e-12);
  }
}

TEST(Asp, RateFitClampsAndRepresentative) {
  std::vector<double> b{100, 200, 400}, l;
  for (double v : b) l.push_back(std::pow(v, -1.2));
  const auto r = fit_rate(b, l);
  EXPECT_TRUE(r.clamped);
  EXPECT_DOUBLE_EQ(r.gamma, 1 - 1e-6);
  std::vector<double> l2;
  for (double v : b) l2.push_back(std::pow(v, -0.75));
  const auto q = fit_rate(b, l2);
  EXPECT_NEAR(q.r, 3.0, 1e-9);
  EXPECT_NEAR(q.p, 1.0, 1e-9);
}

TEST(Asp, LogMedianRobustness) {
  std::vector<double> v{1e-3, 2e-3, 3e-3, 4e-3, 5e-3};
  EXPECT_NEAR(log_median(v), 3e-3, 1e-15);
  v[4] *= 1e6;
  EXPECT_NEAR(log_median(v), 3e-3, 1e-15);
  v[0] *= 1e-6;
  EXPECT_NEAR(log_median(v), 3e-3, 1e-15);
  EXPECT_NEAR(log_median({1e-2, 1e-4}), 1e-3, 1e-15);
}

TEST(Asp, LadderIsLogSpaced) {
  AspConfig cfg;
  const auto l = subsample_ladder(10000, 2, cfg);
  ASSERT_EQ(l.size(), 10u);
  EXPECT_EQ(l.front(), 500u);
  EXPECT_EQ(l.back(), 1200u);
}

TEST(Asp, UniformSelectionDeterministicAndPositive) {
  const auto d = sine_data(3000, 5, 3);
  const auto spec = enumerate_terms({{0}}, d.domains);
  AspConfig cfg;
  cfg.seed = 17;
  const auto a = asp_uniform(d, spec, cfg);
  const auto b = asp_uniform(d, spec, cfg);
  EXPECT_EQ(a.lambda, b.lambda);
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_GT(a.lambda, 0);
  EXPECT_EQ(a.fits.size(), 5u);
  EXPECT_NEAR(a.lambda * std::pow(3000.0 / a.b, a.gamma), a.lambda_b, 1e-14 * a.lambda_b);
}

TEST(Asp, SelectionIndependentOfThreadCount) {
  auto p = oracle::random_problem(1500, 20, 2, 4, true);
  AspConfig cfg;
  cfg.seed = 5;
  setenv("SSANOVA_THREADS", "1", 1);
  const auto a = asp_uniform(p.data, p.spec, cfg);
  setenv("SSANOVA_THREADS", "4", 1);
  const auto b = asp_uniform(p.data, p.spec, cfg);
  unsetenv("SSANOVA_THREADS");
  EXPECT_EQ(a.lambda, b.lambda);
  EXPECT_EQ(a.theta, b.theta);
}

TEST(Asp, EstimatePTieGoesToOne) {
  const auto d = sine_data(1000, 5, 8);
  const auto spec = enumerate_terms({{0}}, d.domains);
  AspConfig cfg;
  cfg.B_factor = 1.0;
  const auto pc = estimate_p(d, spec, 1e-4, Eigen::VectorXd::Ones(1), 400, cfg);
  EXPECT_EQ(pc.score[0], pc.score[1]);
  EXPECT_EQ(pc.p, 1.0);
}

TEST(Asp, SmoothTruthPrefersPTwo) {
  int twos = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto d = sine_data(8000, 5, 1000 + s);
    const auto spec = enumerate_terms({{0}}, d.domains);
    AspConfig cfg;
    cfg.seed = 77 + s;
    if (asp_uniform(d, spec, cfg).p == 2.0) ++twos;
  }
  EXPECT_GE(twos, 12);
}

TEST(Asp, AsymptoticSelectionRuns) {
  const auto d = sine_data(4000, 5, 9);
  const auto spec = enumerate_terms({{0}}, d.domains);
  AspConfig cfg;
  cfg.subsamples = 3;
  const auto r = asp_asymptotic(d, spec, cfg);
  ASSERT_TRUE(r.rate.has_value());
  EXPECT_GE(r.gamma, 1.0 / 3.0);
  EXPECT_LT(r.gamma, 1.0);
  EXPECT_NEAR(r.lambda, r.rate->C * std::pow(4000.0, -r.gamma), 1e-12 * r.lambda);
}

TEST(Asp, ConfigValidation) {
  AspConfig cfg;
  cfg.sizes = 1;
  EXPECT_THROW(cfg.validate(), InputError);
  cfg = {};
  cfg.p = 3;
  EXPECT_THROW(cfg.validate(), InputError);
  cfg = {};
  cfg.r = 1;
  EXPECT_THROW(cfg.validate(), InputError);
}
