#include <gtest/gtest.h>

#include "mtmatch/comparators.hpp"
#include "mtmatch/gps.hpp"
#include "test_support.hpp"

using namespace mtmatch;

namespace {

Dataset fixture(std::uint64_t seed) { return fixtures::random_dataset(seed, {40, 80, 3, 4, 1, 3, 0.6, 6}); }

// Hajek weighted mean of group w and its weight-fixed variance.
std::pair<double, double> weighted_mean(const Dataset& ds, const MatrixXd& r, int t, int w, const VectorXd& resid_base) {
  double su = 0, suy = 0;
  for (int i = 0; i < ds.n(); ++i) {
    if (ds.treatment(i) != w) continue;
    const double u = w == t ? 1.0 : r(i, t) / r(i, w);
    su += u;
    suy += u * resid_base(i);
  }
  const double mean = suy / su;
  double v = 0;
  for (int i = 0; i < ds.n(); ++i) {
    if (ds.treatment(i) != w) continue;
    const double u = w == t ? 1.0 : r(i, t) / r(i, w);
    v += u * u * (resid_base(i) - mean) * (resid_base(i) - mean);
  }
  return {mean, v / (su * su)};
}

}  // namespace

TEST(Comparators, IpwMatchesFormulaOracle) {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const Dataset ds = fixture(seed);
    const GpsModel gps = fit_gps(ds);
    const MatrixXd r = clamp_probabilities(gps.scores);
    const int t = static_cast<int>(seed % ds.num_treatments());
    const ComparatorEstimate est = ipw_att(ds, gps, t);
    for (std::size_t q = 0; q < est.pairs.size(); ++q) {
      const auto [mj, vj] = weighted_mean(ds, r, t, est.pairs[q].j, ds.outcomes());
      const auto [mk, vk] = weighted_mean(ds, r, t, est.pairs[q].k, ds.outcomes());
      EXPECT_LE(fixtures::rel_diff(est.tau_hat(q), mj - mk), 1e-12);
      EXPECT_LE(fixtures::rel_diff(est.se(q), std::sqrt(vj + vk)), 1e-10);
    }
    for (int w = 0; w < ds.num_treatments(); ++w) {
      EXPECT_LE(est.effective_size(w), ds.group_size(w) + 1e-9);
      EXPECT_GT(est.max_weight(w), 0.0);
    }
  }
}

TEST(Comparators, DrMatchesTwoTermOracle) {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const Dataset ds = fixture(seed);
    const GpsModel gps = fit_gps(ds);
    const GroupRegression regs = fit_group_regressions(ds);
    const MatrixXd r = clamp_probabilities(gps.scores);
    const MatrixXd mu = regs.predict_all(ds.covariates());
    const int t = static_cast<int>(seed % ds.num_treatments());
    const ComparatorEstimate est = dr_att(ds, gps, regs, t);
    auto a = [&](int i, int w) { return w == t ? ds.outcomes()(i) : mu(i, w); };
    for (std::size_t q = 0; q < est.pairs.size(); ++q) {
      const int j = est.pairs[q].j, k = est.pairs[q].k;
      double dbar = 0;
      for (int i : ds.group(t)) dbar += a(i, j) - a(i, k);
      const double nt = ds.group_size(t);
      dbar /= nt;
      double var = 0;
      for (int i : ds.group(t)) var += (a(i, j) - a(i, k) - dbar) * (a(i, j) - a(i, k) - dbar);
      var /= nt * nt;
      double point = dbar;
      for (int w : {j, k}) {
        if (w == t) continue;
        VectorXd e(ds.n());
        for (int i = 0; i < ds.n(); ++i) e(i) = ds.outcomes()(i) - mu(i, w);
        const auto [m, v] = weighted_mean(ds, r, t, w, e);
        point += w == j ? m : -m;
        var += v;
      }
      EXPECT_LE(fixtures::rel_diff(est.tau_hat(q), point), 1e-10);
      EXPECT_LE(fixtures::rel_diff(est.se(q), std::sqrt(var)), 1e-10);
    }
  }
}

TEST(Comparators, ConstantScoresGiveGroupMeanDifferences) {
  const Dataset ds = fixture(9);
  const int z = ds.num_treatments();
  const MatrixXd scores = MatrixXd::Constant(ds.n(), z, 1.0 / z);
  const ComparatorEstimate est = ipw_att(ds, scores, 1);
  VectorXd means = VectorXd::Zero(z);
  for (int w = 0; w < z; ++w) {
    for (int i : ds.group(w)) means(w) += ds.outcomes()(i);
    means(w) /= ds.group_size(w);
  }
  for (std::size_t q = 0; q < est.pairs.size(); ++q) {
    EXPECT_NEAR(est.tau_hat(q), means(est.pairs[q].j) - means(est.pairs[q].k), 1e-12);
  }
  EXPECT_NEAR(est.mu(1), means(1), 1e-12);
  // Constant regression predictions keep the reduction.
  const ComparatorEstimate dr = dr_att(ds, scores, MatrixXd::Constant(ds.n(), z, 3.0), 1);
  EXPECT_LT((dr.tau_hat - est.tau_hat).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Comparators, DrWithZeroOutcomeModelIsIpw) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Dataset ds = fixture(seed);
    const GpsModel gps = fit_gps(ds);
    const auto ipw = ipw_att(ds, gps, 0);
    const auto dr = dr_att(ds, gps.scores, MatrixXd::Zero(ds.n(), ds.num_treatments()), 0);
    EXPECT_LT((ipw.tau_hat - dr.tau_hat).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((ipw.se - dr.se).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Comparators, DrWithConstantWeightsIsRegressionImputation) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Dataset ds = fixture(seed);
    const int z = ds.num_treatments();
    const GroupRegression regs = fit_group_regressions(ds);
    const MatrixXd mu = regs.predict_all(ds.covariates());
    const auto dr = dr_att(ds, MatrixXd::Constant(ds.n(), z, 1.0 / z), mu, 0);
    // OLS with an intercept leaves zero-mean residuals in each group, so the
    // augmentation vanishes and only the imputed regression means remain.
    for (std::size_t q = 0; q < dr.pairs.size(); ++q) {
      double want = 0;
      for (int i : ds.group(0)) {
        const int j = dr.pairs[q].j, k = dr.pairs[q].k;
        want += (j == 0 ? ds.outcomes()(i) : mu(i, j)) - (k == 0 ? ds.outcomes()(i) : mu(i, k));
      }
      want /= ds.group_size(0);
      EXPECT_NEAR(dr.tau_hat(q), want, 1e-9);
    }
  }
}

TEST(Comparators, NoiselessLinearOutcomeIsExact) {
  Dataset base = fixture(3);
  const int z = base.num_treatments();
  MatrixXd potential(base.n(), z);
  VectorXd y(base.n());
  for (int i = 0; i < base.n(); ++i) {
    for (int w = 0; w < z; ++w) potential(i, w) = w + (1.0 + w) * base.covariates()(i, 0);
    y(i) = potential(i, base.treatment(i));
  }
  const Dataset ds(base.covariates(), base.treatments(), y);
  const GpsModel gps = fit_gps(ds);
  const auto dr = dr_att(ds, gps, fit_group_regressions(ds), 2);
  for (std::size_t q = 0; q < dr.pairs.size(); ++q) {
    double truth = 0;
    for (int i : ds.group(2)) truth += potential(i, dr.pairs[q].j) - potential(i, dr.pairs[q].k);
    EXPECT_NEAR(dr.tau_hat(q), truth / ds.group_size(2), 1e-9);
  }
}

TEST(Comparators, ShiftEquivariance) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Dataset ds = fixture(seed);
    const Dataset shifted(ds.covariates(), ds.treatments(), ds.outcomes().array() - 4.0);
    const GpsModel gps = fit_gps(ds);
    EXPECT_LT((ipw_att(ds, gps, 0).tau_hat - ipw_att(shifted, gps, 0).tau_hat).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((ipw_att(ds, gps, 0).se - ipw_att(shifted, gps, 0).se).cwiseAbs().maxCoeff(), 1e-10);
    const auto a = dr_att(ds, gps, fit_group_regressions(ds), 1);
    const auto b = dr_att(shifted, gps, fit_group_regressions(shifted), 1);
    EXPECT_LT((a.tau_hat - b.tau_hat).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Comparators, WeightCapAndValidation) {
  const Dataset ds = fixture(2);
  const GpsModel gps = fit_gps(ds);
  ComparatorOptions opts;
  opts.weight_cap = 0.5;
  const VectorXd u = comparator_weights(ds, gps.scores, 0, opts);
  for (int i = 0; i < ds.n(); ++i) {
    EXPECT_GE(u(i), 0.0);
    EXPECT_LE(u(i), 0.5);
  }
  EXPECT_EQ(ipw_att(ds, gps, 0, {}, opts).weight_cap, 0.5);
  opts.weight_cap = 0.0;
  EXPECT_THROW(comparator_weights(ds, gps.scores, 0, opts), ValidationError);
  EXPECT_THROW(ipw_att(ds, gps, 7), ValidationError);
  EXPECT_THROW(dr_att(ds, gps.scores, MatrixXd::Zero(2, 2), 0), ValidationError);
}
