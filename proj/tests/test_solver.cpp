#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace ssanova;

TEST(Basis, FullAndRuleSizes) {
  const auto all = select_basis(100, 100, 7);
  ASSERT_EQ(all.size(), 100u);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(all.indices[i], i);
  EXPECT_EQ(basis_count(1000000), 215u);
  const auto big = select_basis(1000000, basis_count(1000000), 11);
  EXPECT_EQ(big.size(), 215u);
  EXPECT_EQ(std::set<std::size_t>(big.indices.begin(), big.indices.end()).size(), 215u);
}

TEST(Basis, Deterministic) {
  EXPECT_EQ(select_basis(500, 40, 3).indices, select_basis(500, 40, 3).indices);
  EXPECT_NE(select_basis(500, 40, 3).indices, select_basis(500, 40, 4).indices);
  EXPECT_THROW(select_basis(10, 11, 1), InputError);
  EXPECT_THROW(select_basis(10, 1, 1, 1), InputError);
}

TEST(Assemble, SmallDesignAndLinearity) {
  Dataset d;
  d.X.resize(3, 1);
  d.X << 0.0, 0.5, 1.0;
  d.y = Eigen::Vector3d(1, 2, 3);
  d.domains = {PredictorDomain::continuous(0, 1)};
  d.names = {"x1"};
  const auto spec = enumerate_terms({{0}}, d.domains);
  const auto basis = select_basis(3, 3, 1);
  const Eigen::VectorXd th = Eigen::VectorXd::Constant(1, 1.0);
  const auto a = assemble(d, spec, basis, th);
  EXPECT_EQ(Eigen::Vector3d(a.T.col(1)), Eigen::Vector3d(-0.5, 0, 0.5));
  EXPECT_LT((a.Q - a.K).cwiseAbs().maxCoeff(), 1e-18);
  const auto b = assemble(d, spec, basis, 2 * th);
  EXPECT_EQ(b.K, 2 * a.K);
  EXPECT_EQ(b.Q, 2 * a.Q);
}

TEST(Assemble, RejectsRankDeficientNullSpace) {
  Dataset d;
  d.X.resize(4, 2);
  d.X << 0.1, 0.5, 0.2, 0.5, 0.7, 0.5, 0.9, 0.5;
  d.y = Eigen::Vector4d(1, 2, 3, 4);
  d.domains.assign(2, PredictorDomain::continuous(0, 1));
  d.names = {"a", "b"};
  const auto spec = enumerate_terms(additive_effects(2), d.domains);
  EXPECT_THROW(assemble_blocks(d, spec, select_basis(4, 4, 1)), InputError);
}

TEST(Solver, ParametricResponseIsReproduced) {
  auto p = oracle::random_problem(50, 20, 2, 21);
  const Eigen::Vector3d d0(0.7, -1.3, 2.1);
  const Eigen::VectorXd y = p.T * d0;
  for (double nl : {1e-6, 1e-2, 10.0}) {
    const auto c = solve_penalized(p.T, p.K, p.Q, y, nl);
    EXPECT_LT((c.d - d0).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT(c.c.cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Solver, HeavyPenaltyGivesLeastSquaresOnNullSpace) {
  auto p = oracle::random_problem(60, 25, 1, 4);
  const auto c = solve_penalized(p.T, p.K, p.Q, p.data.y, 1e12);
  const Eigen::VectorXd ls = p.T.colPivHouseholderQr().solve(p.data.y);
  EXPECT_LT((c.d - ls).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_LT(c.c.cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Solver, MatchesDenseNormalEquations) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto p = oracle::random_problem(30, 30, 1 + s % 2, 100 + s);
    for (double nl : {1e-5, 1e-3, 1e-1}) {
      const auto c = solve_penalized(p.T, p.K, p.Q, p.data.y, nl);
      const auto beta = oracle::kkt_solve(p.T, p.K, p.Q, p.data.y, nl);
      const double got = oracle::objective(p.T, p.K, p.Q, p.data.y, nl, c.d, c.c);
      const double want = oracle::objective(p.T, p.K, p.Q, p.data.y, nl, beta.head(p.T.cols()),
                                            beta.tail(p.K.cols()));
      EXPECT_NEAR(got, want, 1e-8 * want);
    }
  }
}

TEST(Solver, ObjectiveNotBeatenByPerturbations) {
  auto p = oracle::random_problem(40, 15, 2, 8);
  const double nl = 1e-3;
  const auto c = solve_penalized(p.T, p.K, p.Q, p.data.y, nl);
  const double f0 = oracle::objective(p.T, p.K, p.Q, p.data.y, nl, c.d, c.c);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> e(0, 1e-3);
  for (int k = 0; k < 100; ++k) {
    Eigen::VectorXd d = c.d, cc = c.c;
    for (auto& v : d) v += e(rng);
    for (auto& v : cc) v += e(rng);
    EXPECT_LE(f0, oracle::objective(p.T, p.K, p.Q, p.data.y, nl, d, cc) + 1e-8);
  }
}

TEST(Solver, HatTraceMatchesDenseAndApplyIsLinear) {
  auto p = oracle::random_problem(40, 40, 1, 12);
  for (double nl : {1e-6, 1e-3, 1e-1}) {
    const auto h = hat_trace(p.T, p.K, p.Q, nl);
    const auto A = oracle::bordered_hat_matrix(p.T, p.K, nl);
    EXPECT_NEAR(h.trace, A.trace(), 1e-8 * A.trace());
    const auto c = solve_penalized(p.T, p.K, p.Q, p.data.y, nl);
    EXPECT_LT((h.apply(p.data.y) - (p.T * c.d + p.K * c.c)).cwiseAbs().maxCoeff(), 1e-9);
    const Eigen::VectorXd y2 = Eigen::VectorXd::LinSpaced(40, -1, 1);
    const Eigen::VectorXd lhs = h.apply(2.5 * p.data.y + y2);
    const Eigen::VectorXd rhs = 2.5 * h.apply(p.data.y) + h.apply(y2);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
  }
  EXPECT_NEAR(hat_trace(p.T, p.K, p.Q, 1e12).trace, 2.0, 1e-3);
}

TEST(Solver, TraceDecreasesWithPenalty) {
  auto p = oracle::random_problem(80, 30, 2, 13);
  double prev = 1e300;
  for (int k = 0; k < 10; ++k) {
    const double t = hat_trace(p.T, p.K, p.Q, std::pow(10.0, -8 + k)).trace;
    EXPECT_LT(t, prev);
    prev = t;
  }
}

TEST(Solver, SpectrumAgreesWithDirectEvaluation) {
  auto p = oracle::random_problem(200, 40, 2, 31, true);
  PenalizedSystem sys(p.T, p.K, p.Q, p.data.y);
  const auto sp = sys.spectrum();
  for (double l = -10; l <= 2; l += 1.5) {
    const double nl = std::pow(10.0, l);
    const auto ev = sys.evaluate(nl);
    EXPECT_NEAR(sp.trace(nl), ev.trace, 1e-8 * ev.trace);
    EXPECT_NEAR(sp.gcv(nl), ev.gcv, 1e-8 * ev.gcv);
  }
}

TEST(Solver, FullBasisMatchesExactSystem) {
  // With q = n the reduced problem is the exact smoothing spline.
  auto p = oracle::random_problem(35, 35, 1, 17);
  const double nl = 1e-4;
  const auto c = solve_penalized(p.T, p.K, p.Q, p.data.y, nl);
  const auto M = p.T.cols();
  const auto n = p.K.rows();
  Eigen::MatrixXd sysm = Eigen::MatrixXd::Zero(n + M, n + M);
  sysm.topLeftCorner(n, n) = p.K + nl * Eigen::MatrixXd::Identity(n, n);
  sysm.topRightCorner(n, M) = p.T;
  sysm.bottomLeftCorner(M, n) = p.T.transpose();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + M);
  rhs.head(n) = p.data.y;
  const Eigen::VectorXd sol = sysm.fullPivLu().solve(rhs);
  const Eigen::VectorXd exact = p.K * sol.head(n) + p.T * sol.tail(M);
  EXPECT_LT((p.T * c.d + p.K * c.c - exact).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Solver, ThetaLambdaRedundancy) {
  auto p = oracle::random_problem(60, 20, 2, 5, true);
  const Eigen::VectorXd th = p.theta;
  const auto a = fit(p.data, p.blocks, SmoothingParams::make(1e-3, th));
  const auto b = fit(p.data, p.blocks, SmoothingParams::make(7e-3, 7.0 * th));
  EXPECT_LT((a.fitted - b.fitted).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(DemmlerReinsch, IdentityAndOrthogonality) {
  auto p = oracle::random_problem(50, 50, 1, 23);
  const auto es = demmler_reinsch(p.T, p.K);
  EXPECT_LT((es.Z.transpose() * p.T).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_GE(es.D.minCoeff(), -1e-8 * es.D.maxCoeff());
  const double b = 50;
  for (double lam : {1e-6, 1e-3, 1e-1}) {
    const Eigen::MatrixXd IA = Eigen::MatrixXd::Identity(50, 50) - oracle::bordered_hat_matrix(p.T, p.K, b * lam);
    const Eigen::VectorXd w = (es.D.array() + b * lam).inverse();
    const Eigen::MatrixXd dr = b * lam * es.Z * w.asDiagonal() * es.Z.transpose();
    EXPECT_LT((IA - dr).cwiseAbs().maxCoeff(), 1e-6) << lam;
  }
}

TEST(Predict, ReproducesFittedValuesAndClamps) {
  auto p = oracle::random_problem(80, 25, 2, 41, true);
  const auto f = fit(p.data, p.blocks, SmoothingParams::make(1e-4, p.theta));
  const auto at_basis = predict_scaled(f, p.spec, f.basis_rows);
  for (std::size_t j = 0; j < f.basis.size(); ++j) {
    EXPECT_NEAR(at_basis(static_cast<Eigen::Index>(j)), f.fitted(static_cast<Eigen::Index>(f.basis.indices[j])), 1e-10);
  }
  RowMatrix raw(2, 2);
  raw << 0.5, 0.5, 1.7, -0.2;
  const auto pr = predict(f, p.spec, raw);
  EXPECT_FALSE(pr.out_of_range[0]);
  EXPECT_TRUE(pr.out_of_range[1]);
  RowMatrix clamped(1, 2);
  clamped << 1.0, 0.0;
  EXPECT_DOUBLE_EQ(pr.values(1), predict_scaled(f, p.spec, clamped)(0));

  FitResult zero = f;
  zero.c.setZero();
  const auto pz = predict_scaled(zero, p.spec, f.basis_rows);
  for (Eigen::Index j = 0; j < pz.size(); ++j) {
    std::span<const double> row(f.basis_rows.data() + j * 2, 2);
    EXPECT_NEAR(pz(j), null_basis(p.spec, row).dot(f.d), 1e-14);
  }
}

TEST(Solver, Reproducible) {
  auto p = oracle::random_problem(70, 20, 2, 3);
  auto q = oracle::random_problem(70, 20, 2, 3);
  const auto a = fit(p.data, p.blocks, SmoothingParams::make(1e-3, p.theta));
  const auto b = fit(q.data, q.blocks, SmoothingParams::make(1e-3, q.theta));
  EXPECT_EQ(a.fitted, b.fitted);
}
