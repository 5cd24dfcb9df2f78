#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mtmatch/data_model.hpp"
#include "mtmatch/matching.hpp"

namespace mtmatch {

enum class EstimatorKind { Basic, BiasCorrected };
enum class SeMethod { None, NewlyProposed, Randomization };

std::string to_string(EstimatorKind kind);
std::string to_string(SeMethod method);

// yhat(i, w) is the observed outcome when W_i = w and an imputed value
// otherwise; entries that the match scope does not cover are NaN.
struct ImputedOutcomes {
  MatrixXd yhat;
  EstimatorKind variant = EstimatorKind::Basic;
};

/// Point estimate of the pairwise effect vector, optionally with covariance.
struct EffectEstimate {
  std::optional<int> reference;  // nullopt: overall ATE
  std::vector<Pair> pairs;
  VectorXd tau_hat;
  std::optional<MatrixXd> covariance;
  VectorXd ybar;  // mean imputed outcome per treatment over the reference group
  EstimatorKind estimator = EstimatorKind::Basic;
  SeMethod se = SeMethod::None;
  int m = 0;
  int J = 0;
  std::optional<VectorXd> bias_terms;  // estimated conditional bias per treatment (bias-corrected only)
  bool covariance_unreliable = false;  // reference group of size 1
};

/// Per-treatment OLS fits mu_w(x) = design(x)^T beta_w.
struct GroupRegression {
  std::vector<VectorXd> beta;
  int num_covariates = 0;
  bool interactions = false;

  int design_size() const;
  VectorXd design(const Eigen::Ref<const VectorXd>& x) const;
  double predict(int w, const Eigen::Ref<const VectorXd>& x) const;
  // n x Z matrix of mu_w(X_i).
  MatrixXd predict_all(const MatrixXd& covariates) const;
};

ImputedOutcomes impute_basic(const Dataset& ds, const MatchResult& matches);

// Imputation route: ybar(w) = mean of yhat(., w) over group t, tau = ybar(j) - ybar(k).
EffectEstimate estimate_att(const Dataset& ds, const ImputedOutcomes& imputed, const MatchResult& matches, int t,
                            const std::vector<Pair>& pairs = {});

// Usage-count route: ybar(w) = (1/n_t) sum_i T_iw (T_it + psi_it/m) Y_i.
VectorXd weighted_ybar(const Dataset& ds, const MatchResult& matches, int t);
EffectEstimate estimate_att_weighted(const Dataset& ds, const MatchResult& matches, int t,
                                     const std::vector<Pair>& pairs = {});

// Intercept + main effects, plus pairwise products x_a x_b (a < b) when `interactions`.
GroupRegression fit_group_regressions(const Dataset& ds, bool interactions = false);

ImputedOutcomes impute_bias_corrected(const Dataset& ds, const MatchResult& matches, const GroupRegression& regs);

// B_w^t = (1/n_t) sum over group t of (1/m) sum_{j in M_i^w} (mu_w(X_i) - mu_w(X_j)); zero for w = t.
VectorXd bias_terms(const Dataset& ds, const MatchResult& matches, const GroupRegression& regs, int t);

// Bias-corrected estimate from the imputation route, with bias_terms attached.
EffectEstimate estimate_att_bias_corrected(const Dataset& ds, const MatchResult& matches,
                                           const GroupRegression& regs, int t, const std::vector<Pair>& pairs = {});

// Subtraction route: tau_bc = tau - (B_k - B_j).
VectorXd bias_corrected_by_subtraction(const EffectEstimate& basic, const VectorXd& bias);

// Sample-share weighted combination of per-reference estimates (point only).
EffectEstimate estimate_ate(const Dataset& ds, const std::vector<EffectEstimate>& per_reference);

VectorXd contrasts(const VectorXd& ybar, const std::vector<Pair>& pairs);

}  // namespace mtmatch
