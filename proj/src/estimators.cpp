#include "mtmatch/estimators.hpp"

#include <cmath>
#include <limits>

namespace mtmatch {

std::string to_string(EstimatorKind kind) {
  return kind == EstimatorKind::Basic ? "basic" : "bias_corrected";
}

std::string to_string(SeMethod method) {
  switch (method) {
    case SeMethod::None: return "none";
    case SeMethod::NewlyProposed: return "new";
    case SeMethod::Randomization: return "randomization";
  }
  return "none";
}

VectorXd contrasts(const VectorXd& ybar, const std::vector<Pair>& pairs) {
  VectorXd tau(static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t q = 0; q < pairs.size(); ++q) tau(static_cast<Eigen::Index>(q)) = ybar(pairs[q].j) - ybar(pairs[q].k);
  return tau;
}

namespace {

void check_reference(const Dataset& ds, int t) {
  if (t < 0 || t >= ds.num_treatments()) throw ValidationError("reference treatment out of range");
}

std::vector<Pair> checked_pairs(const Dataset& ds, int t, const std::vector<Pair>& pairs) {
  EstimandSpec spec{t, pairs};
  spec.check(ds.num_treatments());
  return spec.resolved_pairs(ds.num_treatments());
}

template <class Value>
MatrixXd impute_with(const Dataset& ds, const MatchResult& matches, Value value) {
  const int z = ds.num_treatments();
  MatrixXd yhat = MatrixXd::Constant(ds.n(), z, std::numeric_limits<double>::quiet_NaN());
  for (int i = 0; i < ds.n(); ++i) {
    const int wi = ds.treatment(i);
    yhat(i, wi) = ds.outcomes()(i);
    const bool required = matches.needs_imputation(i, wi);
    for (int w = 0; w < z; ++w) {
      if (w == wi) continue;
      const auto& set = matches.cross(i, w);
      if (set.empty()) {
        if (required) {
          throw ValidationError("missing match set for unit " + std::to_string(i) + " and treatment '" +
                                ds.labels()[w] + "'");
        }
        continue;
      }
      double s = 0.0;
      for (int j : set) s += value(i, j, w);
      yhat(i, w) = s / static_cast<double>(set.size());
    }
  }
  return yhat;
}

}  // namespace

ImputedOutcomes impute_basic(const Dataset& ds, const MatchResult& matches) {
  const VectorXd& y = ds.outcomes();
  return {impute_with(ds, matches, [&](int, int j, int) { return y(j); }), EstimatorKind::Basic};
}

EffectEstimate estimate_att(const Dataset& ds, const ImputedOutcomes& imputed, const MatchResult& matches, int t,
                            const std::vector<Pair>& pairs) {
  check_reference(ds, t);
  EffectEstimate est;
  est.reference = t;
  est.pairs = checked_pairs(ds, t, pairs);
  const int z = ds.num_treatments();
  est.ybar = VectorXd::Zero(z);
  for (int i : ds.group(t)) {
    for (int w = 0; w < z; ++w) {
      const double v = imputed.yhat(i, w);
      if (!std::isfinite(v)) {
        throw ValidationError("imputation does not cover unit " + std::to_string(i) + " for treatment '" +
                              ds.labels()[w] + "'");
      }
      est.ybar(w) += v;
    }
  }
  est.ybar /= static_cast<double>(ds.group_size(t));
  est.tau_hat = contrasts(est.ybar, est.pairs);
  est.estimator = imputed.variant;
  est.m = matches.m;
  est.J = matches.J;
  est.covariance_unreliable = ds.group_size(t) == 1;
  return est;
}

VectorXd weighted_ybar(const Dataset& ds, const MatchResult& matches, int t) {
  check_reference(ds, t);
  if (matches.m < 1) throw ValidationError("match result has no cross matches");
  VectorXd ybar = VectorXd::Zero(ds.num_treatments());
  for (int i = 0; i < ds.n(); ++i) {
    const int w = ds.treatment(i);
    const double weight = (w == t ? 1.0 : 0.0) + static_cast<double>(matches.psi(i, t)) / matches.m;
    ybar(w) += weight * ds.outcomes()(i);
  }
  return ybar / static_cast<double>(ds.group_size(t));
}

EffectEstimate estimate_att_weighted(const Dataset& ds, const MatchResult& matches, int t,
                                     const std::vector<Pair>& pairs) {
  EffectEstimate est;
  est.reference = t;
  est.pairs = checked_pairs(ds, t, pairs);
  est.ybar = weighted_ybar(ds, matches, t);
  est.tau_hat = contrasts(est.ybar, est.pairs);
  est.m = matches.m;
  est.J = matches.J;
  est.covariance_unreliable = ds.group_size(t) == 1;
  return est;
}

int GroupRegression::design_size() const {
  const int p = num_covariates;
  return 1 + p + (interactions ? p * (p - 1) / 2 : 0);
}

VectorXd GroupRegression::design(const Eigen::Ref<const VectorXd>& x) const {
  VectorXd d(design_size());
  d(0) = 1.0;
  int c = 1;
  for (int a = 0; a < num_covariates; ++a) d(c++) = x(a);
  if (interactions) {
    for (int a = 0; a < num_covariates; ++a) {
      for (int b = a + 1; b < num_covariates; ++b) d(c++) = x(a) * x(b);
    }
  }
  return d;
}

double GroupRegression::predict(int w, const Eigen::Ref<const VectorXd>& x) const { return design(x).dot(beta[w]); }

MatrixXd GroupRegression::predict_all(const MatrixXd& covariates) const {
  MatrixXd mu(covariates.rows(), static_cast<Eigen::Index>(beta.size()));
  for (Eigen::Index i = 0; i < covariates.rows(); ++i) {
    const VectorXd d = design(covariates.row(i).transpose());
    for (std::size_t w = 0; w < beta.size(); ++w) mu(i, static_cast<Eigen::Index>(w)) = d.dot(beta[w]);
  }
  return mu;
}

GroupRegression fit_group_regressions(const Dataset& ds, bool interactions) {
  GroupRegression regs;
  regs.num_covariates = ds.num_covariates();
  regs.interactions = interactions;
  const int q = regs.design_size();

  std::vector<std::string> names{"intercept"};
  for (const auto& nm : ds.covariate_names()) names.push_back(nm);
  if (interactions) {
    for (int a = 0; a < ds.num_covariates(); ++a) {
      for (int b = a + 1; b < ds.num_covariates(); ++b) {
        names.push_back(ds.covariate_names()[a] + ":" + ds.covariate_names()[b]);
      }
    }
  }

  for (int w = 0; w < ds.num_treatments(); ++w) {
    const auto& units = ds.group(w);
    const int nw = static_cast<int>(units.size());
    if (nw <= q) {
      throw ValidationError("treatment '" + ds.labels()[w] + "' has " + std::to_string(nw) +
                            " units; outcome regression needs more than " + std::to_string(q));
    }
    MatrixXd d(nw, q);
    VectorXd y(nw);
    for (int r = 0; r < nw; ++r) {
      d.row(r) = regs.design(ds.covariates().row(units[r]).transpose()).transpose();
      y(r) = ds.outcomes()(units[r]);
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(d);
    if (qr.rank() < q) {
      // Name the columns that add nothing to the span of the ones before them.
      std::string dependent;
      for (int c = 1, rank = 1; c < q; ++c) {
        Eigen::ColPivHouseholderQR<MatrixXd> partial(d.leftCols(c + 1));
        if (partial.rank() > rank) {
          rank = static_cast<int>(partial.rank());
        } else {
          dependent += (dependent.empty() ? "" : ", ") + names[c];
        }
      }
      throw NumericalError("outcome regression for treatment '" + ds.labels()[w] +
                           "' is rank deficient (dependent columns: " + dependent + ")");
    }
    regs.beta.push_back(qr.solve(y));
  }
  return regs;
}

ImputedOutcomes impute_bias_corrected(const Dataset& ds, const MatchResult& matches, const GroupRegression& regs) {
  if (static_cast<int>(regs.beta.size()) != ds.num_treatments() || regs.num_covariates != ds.num_covariates()) {
    throw ValidationError("outcome regressions do not match the dataset");
  }
  const MatrixXd mu = regs.predict_all(ds.covariates());
  const VectorXd& y = ds.outcomes();
  return {impute_with(ds, matches, [&](int i, int j, int w) { return y(j) + mu(i, w) - mu(j, w); }),
          EstimatorKind::BiasCorrected};
}

VectorXd bias_terms(const Dataset& ds, const MatchResult& matches, const GroupRegression& regs, int t) {
  check_reference(ds, t);
  const MatrixXd mu = regs.predict_all(ds.covariates());
  VectorXd b = VectorXd::Zero(ds.num_treatments());
  for (int i : ds.group(t)) {
    for (int w = 0; w < ds.num_treatments(); ++w) {
      if (w == t) continue;
      const auto& set = matches.cross(i, w);
      if (set.empty()) throw ValidationError("missing match set for unit " + std::to_string(i));
      double s = 0.0;
      for (int j : set) s += mu(i, w) - mu(j, w);
      b(w) += s / static_cast<double>(set.size());
    }
  }
  return b / static_cast<double>(ds.group_size(t));
}

EffectEstimate estimate_att_bias_corrected(const Dataset& ds, const MatchResult& matches,
                                           const GroupRegression& regs, int t, const std::vector<Pair>& pairs) {
  EffectEstimate est = estimate_att(ds, impute_bias_corrected(ds, matches, regs), matches, t, pairs);
  est.bias_terms = bias_terms(ds, matches, regs, t);
  return est;
}

VectorXd bias_corrected_by_subtraction(const EffectEstimate& basic, const VectorXd& bias) {
  VectorXd tau = basic.tau_hat;
  for (std::size_t q = 0; q < basic.pairs.size(); ++q) {
    const auto& p = basic.pairs[q];
    tau(static_cast<Eigen::Index>(q)) -= bias(p.k) - bias(p.j);
  }
  return tau;
}

EffectEstimate estimate_ate(const Dataset& ds, const std::vector<EffectEstimate>& per_reference) {
  const int z = ds.num_treatments();
  std::vector<const EffectEstimate*> by_ref(z, nullptr);
  for (const auto& e : per_reference) {
    if (!e.reference || *e.reference < 0 || *e.reference >= z) {
      throw ValidationError("overall ATE needs per-reference estimates");
    }
    by_ref[*e.reference] = &e;
  }
  for (int t = 0; t < z; ++t) {
    if (!by_ref[t]) throw ValidationError("missing estimate for reference treatment '" + ds.labels()[t] + "'");
    if (by_ref[t]->pairs != by_ref[0]->pairs) throw ValidationError("per-reference estimates use different pairs");
  }
  EffectEstimate ate;
  ate.reference = std::nullopt;
  ate.pairs = by_ref[0]->pairs;
  ate.tau_hat = VectorXd::Zero(static_cast<Eigen::Index>(ate.pairs.size()));
  ate.ybar = VectorXd::Zero(z);
  for (int t = 0; t < z; ++t) {
    const double share = static_cast<double>(ds.group_size(t)) / ds.n();
    ate.tau_hat += share * by_ref[t]->tau_hat;
    ate.ybar += share * by_ref[t]->ybar;
  }
  ate.estimator = by_ref[0]->estimator;
  ate.m = by_ref[0]->m;
  ate.J = by_ref[0]->J;
  return ate;
}

}  // namespace mtmatch
