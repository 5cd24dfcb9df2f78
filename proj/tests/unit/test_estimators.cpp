#include <gtest/gtest.h>

#include <random>

#include "mtmatch/estimators.hpp"
#include "mtmatch/gps.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace mtmatch;

namespace {

MatchResult att_matches(const Dataset& ds, int t, int m) {
  return knn_match(ds, distance_matrix(ds, nullptr, DistanceKind::EuclidCovariates), m, EstimandSpec::att(t));
}

Dataset with_outcomes(const Dataset& ds, const VectorXd& y) {
  return Dataset(ds.covariates(), ds.treatments(), y, ds.labels(), ds.covariate_names());
}

}  // namespace

TEST(Estimators, BasicMatchesOracleAndUsageCountRoute) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const Dataset ds = fixtures::random_dataset(seed);
    const int t = static_cast<int>(seed % ds.num_treatments());
    const int m = 1 + static_cast<int>(seed % 3);
    const MatchResult r = att_matches(ds, t, m);
    const EffectEstimate est = estimate_att(ds, impute_basic(ds, r), r, t);
    const EffectEstimate alt = estimate_att_weighted(ds, r, t);
    for (std::size_t q = 0; q < est.pairs.size(); ++q) {
      const double want = oracle::tau(ds, r, t, est.pairs[q].j, est.pairs[q].k);
      EXPECT_LE(fixtures::rel_diff(est.tau_hat(q), want), 1e-10);
      EXPECT_LE(fixtures::rel_diff(alt.tau_hat(q), want), 1e-10);
    }
  }
}

TEST(Estimators, TransitivityAndSkewSymmetry) {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const Dataset ds = fixtures::random_dataset(seed, {20, 40, 3, 3, 1, 3, 0.5});
    const MatchResult r = att_matches(ds, 0, 1);
    const EffectEstimate est = estimate_att(ds, impute_basic(ds, r), r, 0, {{0, 1}, {1, 2}, {0, 2}, {1, 0}});
    EXPECT_NEAR(est.tau_hat(0) + est.tau_hat(1), est.tau_hat(2), 1e-12 * (1 + std::abs(est.tau_hat(2))));
    EXPECT_EQ(est.tau_hat(3), -est.tau_hat(0));
  }
}

TEST(Estimators, OutcomeShiftAndScaleEquivariance) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Dataset ds = fixtures::random_dataset(seed);
    const MatchResult r = att_matches(ds, 1, 2);
    const auto base = estimate_att(ds, impute_basic(ds, r), r, 1).tau_hat;
    const Dataset shifted = with_outcomes(ds, ds.outcomes().array() + 17.5);
    const Dataset scaled = with_outcomes(ds, ds.outcomes() * -3.0);
    EXPECT_LT((estimate_att(shifted, impute_basic(shifted, r), r, 1).tau_hat - base).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((estimate_att(scaled, impute_basic(scaled, r), r, 1).tau_hat + 3.0 * base).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Estimators, RegressionMatchesNormalEquations) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const Dataset ds = fixtures::random_dataset(seed, {40, 60, 3, 4, 1, 3, 0.5, 6});
    const GroupRegression regs = fit_group_regressions(ds);
    const MatrixXd beta = oracle::group_fits(ds);
    for (int w = 0; w < ds.num_treatments(); ++w) {
      for (int c = 0; c < beta.rows(); ++c) EXPECT_NEAR(regs.beta[w](c), beta(c, w), 1e-9);
    }
  }
}

TEST(Estimators, NoiselessLineRecoveredExactly) {
  std::vector<int> t;
  MatrixXd x(8, 1);
  VectorXd y(8);
  for (int i = 0; i < 8; ++i) {
    t.push_back(i % 2);
    x(i, 0) = i;
    y(i) = 1.0 + 2.0 * i;
  }
  const GroupRegression regs = fit_group_regressions(Dataset(x, t, y));
  EXPECT_NEAR(regs.beta[0](0), 1.0, 1e-10);
  EXPECT_NEAR(regs.beta[0](1), 2.0, 1e-10);
}

TEST(Estimators, RankDeficientDesignNamesColumns) {
  MatrixXd x(12, 2);
  for (int i = 0; i < 12; ++i) {
    x(i, 0) = i;
    x(i, 1) = 2.0 * i;
  }
  std::vector<int> t(12);
  for (int i = 0; i < 12; ++i) t[i] = i % 2;
  try {
    fit_group_regressions(Dataset(x, t, VectorXd::LinSpaced(12, 0, 1), {}, {"a", "b"}));
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("b"), std::string::npos);
  }
}

TEST(Estimators, InteractionDesign) {
  GroupRegression g;
  g.num_covariates = 3;
  g.interactions = true;
  EXPECT_EQ(g.design_size(), 1 + 3 + 3);
  VectorXd x(3);
  x << 2, 3, 5;
  VectorXd want(7);
  want << 1, 2, 3, 5, 6, 10, 15;
  EXPECT_EQ(g.design(x), want);
}

TEST(Estimators, BiasTermsMatchOracleAndBothRoutesAgree) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const Dataset ds = fixtures::random_dataset(seed, {30, 40, 3, 4, 1, 3, 0.8, 6});
    const int t = static_cast<int>(seed % ds.num_treatments());
    const int m = 1 + static_cast<int>(seed % 2);
    const MatchResult r = att_matches(ds, t, m);
    const GroupRegression regs = fit_group_regressions(ds);
    const MatrixXd beta = oracle::group_fits(ds);
    const VectorXd b = bias_terms(ds, r, regs, t);
    for (int w = 0; w < ds.num_treatments(); ++w) {
      EXPECT_LE(fixtures::rel_diff(b(w), oracle::bias_term(ds, r, beta, t, w)), 1e-8) << "seed " << seed;
    }
    const EffectEstimate basic = estimate_att(ds, impute_basic(ds, r), r, t);
    const EffectEstimate bc = estimate_att_bias_corrected(ds, r, regs, t);
    const VectorXd sub = bias_corrected_by_subtraction(basic, b);
    EXPECT_LT((bc.tau_hat - sub).cwiseAbs().maxCoeff(), 1e-10 * (1 + sub.cwiseAbs().maxCoeff()));
    ASSERT_TRUE(bc.bias_terms.has_value());
  }
}

TEST(Estimators, BiasCorrectionRecoversLinearTruth) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Dataset ds = fixtures::random_dataset(seed, {30, 40, 3, 3, 2, 2, 1.0});
    const int z = ds.num_treatments();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-2, 2);
    MatrixXd beta(3, z);
    for (int c = 0; c < 3; ++c) {
      for (int w = 0; w < z; ++w) beta(c, w) = u(rng);
    }
    MatrixXd potential(ds.n(), z);
    VectorXd y(ds.n());
    for (int i = 0; i < ds.n(); ++i) {
      for (int w = 0; w < z; ++w) potential(i, w) = beta(0, w) + ds.covariates().row(i).dot(beta.col(w).tail(2));
      y(i) = potential(i, ds.treatment(i));
    }
    ds = with_outcomes(ds, y);
    const int t = 0;
    const MatchResult r = att_matches(ds, t, 1);
    const EffectEstimate bc = estimate_att_bias_corrected(ds, r, fit_group_regressions(ds), t);
    for (std::size_t q = 0; q < bc.pairs.size(); ++q) {
      double truth = 0.0;
      for (int i : ds.group(t)) truth += potential(i, bc.pairs[q].j) - potential(i, bc.pairs[q].k);
      truth /= ds.group_size(t);
      EXPECT_NEAR(bc.tau_hat(q), truth, 1e-8);
    }
  }
}

TEST(Estimators, AteIsShareWeightedAverage) {
  const Dataset ds = fixtures::random_dataset(8);
  std::vector<EffectEstimate> per;
  VectorXd want = VectorXd::Zero(static_cast<Eigen::Index>(all_pairs(ds.num_treatments()).size()));
  for (int t = 0; t < ds.num_treatments(); ++t) {
    const MatchResult r = att_matches(ds, t, 1);
    per.push_back(estimate_att(ds, impute_basic(ds, r), r, t));
    want += per.back().tau_hat * ds.group_size(t) / static_cast<double>(ds.n());
  }
  const EffectEstimate ate = estimate_ate(ds, per);
  EXPECT_FALSE(ate.reference.has_value());
  EXPECT_FALSE(ate.covariance.has_value());
  EXPECT_LT((ate.tau_hat - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Estimators, ImputationLeavesObservedOutcomes) {
  const Dataset ds = fixtures::random_dataset(3);
  const MatchResult r = att_matches(ds, 0, 1);
  const ImputedOutcomes imp = impute_basic(ds, r);
  for (int i = 0; i < ds.n(); ++i) {
    EXPECT_EQ(imp.yhat(i, ds.treatment(i)), ds.outcomes()(i));
    for (int w = 0; w < ds.num_treatments(); ++w) {
      if (w != ds.treatment(i) && ds.treatment(i) != 0) EXPECT_TRUE(std::isnan(imp.yhat(i, w)));
    }
  }
}
