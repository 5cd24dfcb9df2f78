#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mtmatch/json_io.hpp"
#include "mtmatch/simulation.hpp"

using namespace mtmatch;

namespace {

SimConfig small_cell() {
  SimConfig cfg;
  cfg.n1 = 40;
  cfg.replications = 6;
  cfg.b = 0.5;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST(Simulation, GroupSizesAndDesign) {
  SimConfig cfg;
  cfg.n1 = 101;
  cfg.gamma = 1.5;
  EXPECT_EQ(cfg.group_sizes(), (std::vector<int>{101, 152, 227}));
  cfg.P = 6;
  cfg.b = 0.7;
  for (int w = 0; w < 3; ++w) {
    for (int c = 0; c < 6; ++c) EXPECT_EQ(cfg.mean(w)(c), c % 3 == w ? 0.7 : 0.0);
  }
  cfg.sigma2sq = 2.0;
  cfg.sigma3sq = 0.5;
  cfg.lambda = 0.25;
  const double diag[] = {1.0, 2.0, 0.5};
  for (int w = 0; w < 3; ++w) {
    const MatrixXd s = cfg.covariance(w);
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 6; ++c) EXPECT_EQ(s(r, c), r == c ? diag[w] : 0.25);
    }
  }
}

TEST(Simulation, NonPositiveDefiniteCovarianceRejected) {
  SimConfig cfg;
  cfg.lambda = 1.0;
  EXPECT_THROW(cfg.check(), ValidationError);
  cfg.lambda = -0.6;
  EXPECT_THROW(cfg.check(), ValidationError);
  cfg.lambda = 0.0;
  cfg.P = 4;
  EXPECT_THROW(cfg.check(), ValidationError);
}

TEST(Simulation, IdIsStableAndSensitive) {
  SimConfig a = small_cell();
  SimConfig b = small_cell();
  EXPECT_EQ(a.id(), b.id());
  EXPECT_EQ(a.id().size(), 16u);
  b.b = 0.25;
  EXPECT_NE(a.id(), b.id());
  b = a;
  b.seed = 12;
  EXPECT_NE(a.id(), b.id());
}

TEST(Simulation, TrueEstimandsDirectSubtraction) {
  MatrixXd pot(1, 3);
  pot << 1, 4, 6;
  const VectorXd tau = true_estimands(pot, {0}, 0);
  EXPECT_EQ(tau, (VectorXd(3) << -3, -5, -2).finished());
}

TEST(Simulation, TrueEstimandsRandomTable) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 10 + rep;
    MatrixXd pot(n, 3);
    std::vector<int> w(n);
    for (int i = 0; i < n; ++i) {
      w[i] = i % 3;
      for (int c = 0; c < 3; ++c) pot(i, c) = normal(rng);
    }
    const int t = rep % 3;
    const VectorXd tau = true_estimands(pot, w, t);
    const int jk[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (int q = 0; q < 3; ++q) {
      double s = 0;
      int cnt = 0;
      for (int i = 0; i < n; ++i) {
        if (w[i] != t) continue;
        s += pot(i, jk[q][0]) - pot(i, jk[q][1]);
        ++cnt;
      }
      EXPECT_NEAR(tau(q), s / cnt, 1e-12);
    }
  }
}

TEST(Simulation, GeneratedTableIsConsistent) {
  for (auto link : {ResponseLink::Identity, ResponseLink::Exp}) {
    SimConfig cfg = small_cell();
    cfg.g = link;
    cfg.P = 6;
    const SimDataset sd = generate_dataset(cfg, 2);
    ASSERT_EQ(sd.data.n(), 120);
    EXPECT_EQ(sd.beta.rows(), 6);
    EXPECT_LE(sd.beta.cwiseAbs().maxCoeff(), cfg.theta);
    for (int i = 0; i < sd.data.n(); ++i) {
      VectorXd gx = sd.data.covariates().row(i).transpose();
      if (link == ResponseLink::Exp) gx = gx.array().exp();
      for (int w = 0; w < 3; ++w) EXPECT_NEAR(sd.mu(i, w), gx.dot(sd.beta.col(w)), 1e-10 * (1 + std::abs(sd.mu(i, w))));
      EXPECT_EQ(sd.data.outcomes()(i), sd.potential(i, sd.data.treatment(i)));
    }
    // Noise is N(0, 1): residual variance near 1.
    const double var = (sd.potential - sd.mu).array().square().mean();
    EXPECT_GT(var, 0.7);
    EXPECT_LT(var, 1.3);
  }
}

TEST(Simulation, ZeroThetaGivesNullEffects) {
  SimConfig cfg = small_cell();
  cfg.theta = 0.0;
  const SimDataset sd = generate_dataset(cfg, 0);
  EXPECT_EQ(sd.beta, MatrixXd::Zero(3, 3));
  EXPECT_EQ(sd.mu, MatrixXd::Zero(sd.data.n(), 3));
  EXPECT_EQ(true_estimands(sd.mu, sd.data.treatments(), 0), VectorXd::Zero(3));
}

TEST(Simulation, SymmetricDesignHasMatchingGroupMeans) {
  SimConfig cfg;
  cfg.n1 = 2000;
  const SimDataset sd = generate_dataset(cfg, 0);
  for (int w = 1; w < 3; ++w) {
    for (int c = 0; c < 3; ++c) {
      double m0 = 0, mw = 0;
      for (int i : sd.data.group(0)) m0 += sd.data.covariates()(i, c);
      for (int i : sd.data.group(w)) mw += sd.data.covariates()(i, c);
      EXPECT_LT(std::abs(m0 / 2000 - mw / 2000), 5.0 * std::sqrt(2.0 / 2000));
    }
  }
}

TEST(Simulation, StudentTVariance) {
  SimConfig cfg;
  cfg.f = CovariateDist::T7;
  cfg.n1 = 20000;
  cfg.gamma = 1.0;
  const double raw = generate_dataset(cfg, 0).data.covariates().array().square().mean();
  cfg.standardize_t = true;
  const double std_var = generate_dataset(cfg, 0).data.covariates().array().square().mean();
  EXPECT_NEAR(raw, 7.0 / 5.0, 0.08);
  EXPECT_NEAR(std_var, 1.0, 0.06);
}

TEST(Simulation, BetaSharedAcrossReplicationsUnlessRedrawn) {
  SimConfig cfg = small_cell();
  EXPECT_EQ(beta_seed(cfg, 0), beta_seed(cfg, 5));
  EXPECT_EQ(generate_dataset(cfg, 1).beta, generate_dataset(cfg, 4).beta);
  cfg.redraw_beta = true;
  EXPECT_NE(generate_dataset(cfg, 1).beta, generate_dataset(cfg, 4).beta);
}

TEST(Simulation, Quantiles) {
  const Quantiles q = quantiles({4, 1, 3, 2});
  EXPECT_DOUBLE_EQ(q.median, 2.5);
  EXPECT_DOUBLE_EQ(q.q25, 1.75);
  EXPECT_DOUBLE_EQ(q.q75, 3.25);
  const Quantiles s = quantiles({std::nan(""), 5.0});
  EXPECT_EQ(s.median, 5.0);
  EXPECT_EQ(s.q25, 5.0);
  EXPECT_TRUE(std::isnan(quantiles({}).median));
}

TEST(Simulation, AggregateMatchesHandComputation) {
  SimConfig cfg = small_cell();
  cfg.estimators = {"B-N", "IPW"};
  std::vector<ReplicationResult> reps;
  const double taus[3][3] = {{1.0, 2.0, 1.0}, {0.5, 1.5, 1.0}, {2.0, 2.0, 0.0}};
  const double hats[3][3] = {{1.1, 2.5, 1.4}, {0.2, 1.5, 1.3}, {2.0, 1.0, -1.0}};
  const double ses[3] = {0.1, 0.2, 0.3};
  for (int r = 0; r < 3; ++r) {
    ReplicationResult rr;
    rr.ok = true;
    rr.true_tau = Eigen::Map<const VectorXd>(taus[r], 3);
    rr.true_conditional_bias = VectorXd::Zero(3);
    for (int e = 0; e < 2; ++e) {
      rr.tau_hat.push_back(Eigen::Map<const VectorXd>(hats[r], 3));
      rr.se.push_back(VectorXd::Constant(3, ses[r]));
    }
    rr.region_covered = {r == 1 ? 0.0 : 1.0, std::nan("")};
    reps.push_back(rr);
  }
  ReplicationResult failed;
  failed.error = "boom";
  reps.push_back(failed);

  const SimReport rep = aggregate(cfg, reps);
  EXPECT_EQ(rep.replications, 4);
  EXPECT_EQ(rep.completed, 3);
  EXPECT_EQ(rep.failures, 1);
  EXPECT_TRUE(rep.failure_limit_exceeded);
  EXPECT_EQ(rep.failure_messages, std::vector<std::string>{"boom"});

  const double z = 2.3939797998185104;  // Phi^{-1}(1 - 0.05 / 6)
  const EstimatorMetrics& bn = *rep.find("B-N");
  EXPECT_NEAR(bn.region_coverage, 2.0 / 3.0, 1e-15);
  EXPECT_TRUE(std::isnan(rep.find("IPW")->region_coverage));
  for (int q = 0; q < 3; ++q) {
    double bias = 0, se = 0, mean = 0, cover = 0;
    std::vector<double> abs_err;
    for (int r = 0; r < 3; ++r) {
      const double err = hats[r][q] - taus[r][q];
      bias += err / 3;
      se += ses[r] / 3;
      mean += hats[r][q] / 3;
      cover += std::abs(err) <= z * ses[r] ? 1.0 / 3 : 0.0;
      abs_err.push_back(std::abs(err));
    }
    double ss = 0;
    for (int r = 0; r < 3; ++r) ss += (hats[r][q] - mean) * (hats[r][q] - mean);
    std::sort(abs_err.begin(), abs_err.end());
    EXPECT_NEAR(bn.bias(q), bias, 1e-12);
    EXPECT_NEAR(bn.se_mean(q), se, 1e-12);
    EXPECT_NEAR(bn.empirical_sd(q), std::sqrt(ss / 2), 1e-12);
    EXPECT_NEAR(bn.interval_coverage(q), cover, 1e-12);
    EXPECT_NEAR(bn.median_abs_error(q), abs_err[1], 1e-12);
  }
  EXPECT_NEAR(bn.abs_bias, bn.bias.cwiseAbs().mean(), 1e-15);
  EXPECT_NEAR(bn.width, 2 * z * 0.2, 1e-6);
  EXPECT_NEAR(bn.se_ratio, (bn.se_mean.array() / bn.empirical_sd.array()).mean(), 1e-12);
}

TEST(Simulation, SingleReplicationHasNoSeRatio) {
  SimConfig cfg = small_cell();
  cfg.replications = 1;
  const SimReport rep = run_cell(cfg);
  EXPECT_EQ(rep.completed, 1);
  for (const auto& e : rep.estimators) EXPECT_TRUE(std::isnan(e.se_ratio)) << e.name;
}

TEST(Simulation, DeterministicAcrossWorkerCounts) {
  const SimConfig cfg = small_cell();
  const std::string one = dump(to_json(run_cell(cfg, {1})));
  const std::string three = dump(to_json(run_cell(cfg, {3})));
  EXPECT_EQ(one, three);
  EXPECT_EQ(one, dump(to_json(run_cell(cfg, {1}))));
}

TEST(Simulation, ReplicationStreamsDependOnlyOnIndex) {
  const SimConfig cfg = small_cell();
  const MatrixXd beta = draw_beta(cfg, beta_seed(cfg, 0));
  const auto a = run_replication(cfg, 3, beta);
  SimConfig more = cfg;
  more.replications = 50;
  const auto b = run_replication(more, 3, beta);
  ASSERT_TRUE(a.ok);
  EXPECT_EQ(a.tau_hat[0], b.tau_hat[0]);
  EXPECT_EQ(a.true_tau, b.true_tau);
}

TEST(Simulation, ImpossibleCellCountsFailures) {
  SimConfig cfg = small_cell();
  cfg.n1 = 5;
  cfg.P = 6;
  cfg.replications = 3;
  const SimReport rep = run_cell(cfg);
  EXPECT_EQ(rep.failures, 3);
  EXPECT_TRUE(rep.failure_limit_exceeded);
  EXPECT_FALSE(rep.failure_messages.empty());
}

TEST(Simulation, NullCellIsUnbiasedAndCovers) {
  SimConfig cfg;
  cfg.n1 = 100;
  cfg.theta = 0.0;
  cfg.replications = 60;
  cfg.seed = 5;
  cfg.estimators = {"B-N", "BC-N", "IPW", "DR"};
  const SimReport rep = run_cell(cfg);
  ASSERT_EQ(rep.failures, 0);
  // Sample estimands keep the outcome noise, so they are near zero rather than zero.
  EXPECT_LT(rep.true_tau_mean.cwiseAbs().maxCoeff(), 0.1);
  for (const auto& e : rep.estimators) {
    for (int q = 0; q < 3; ++q) {
      EXPECT_LT(std::abs(e.bias(q)), 3.0 * e.empirical_sd(q) / std::sqrt(60.0)) << e.name << " pair " << q;
    }
  }
  EXPECT_GE(rep.find("B-N")->region_coverage, 0.85);
}

TEST(Simulation, FactorialRunControls) {
  SimConfig a = small_cell();
  a.replications = 2;
  SimConfig b = a;
  b.b = 0.0;
  SimConfig c = a;
  c.gamma = 2.0;
  EXPECT_THROW(run_factorial({a, a}), ValidationError);
  EXPECT_THROW(run_factorial({}), ValidationError);
  std::vector<std::string> seen;
  const auto out = run_factorial({a, b, c}, {}, {b.id()}, [&](const SimReport& r) { seen.push_back(r.id); });
  EXPECT_EQ(seen, (std::vector<std::string>{a.id(), c.id()}));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(dump(to_json(out[0])), dump(to_json(run_cell(a))));
  EXPECT_EQ(run_factorial({a, b, c}, {}, {}, {}, 1).size(), 1u);
}
