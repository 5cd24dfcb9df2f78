#pragma once

#include <vector>

#include "mtmatch/estimators.hpp"

namespace mtmatch {

enum class Sigma2Method { RawMatch, ResidualCorrected };

std::string to_string(Sigma2Method method);

// Local estimates of the conditional outcome variance of each unit's own treatment.
struct ConditionalVariances {
  VectorXd sigma2;
  Sigma2Method method = Sigma2Method::RawMatch;
  int J = 0;
};

struct CovarianceMatrix {
  VectorXd var_ybar;  // per-treatment variance of the group-mean imputed outcome
  MatrixXd cov_tau;   // A diag(var_ybar) A^T
};

// J/(J+1) * (Y_i - mean of Y over L_i)^2.
ConditionalVariances sigma2_raw(const Dataset& ds, const MatchResult& matches);

// Same form applied to residuals of the per-treatment outcome regressions.
ConditionalVariances sigma2_residual(const Dataset& ds, const MatchResult& matches, const GroupRegression& regs);

/// Variance of each treatment's mean imputed outcome over reference group t:
///
///   (1/n_t^2) sum_{W_i=t} (yhat_i(w) - ybar(w))^2
///     + (1/n_t^2) sum_i T_iw psi_it (psi_it - 1) / m^2 * sigma2_i
///
/// For w = t the second term vanishes because psi_it = 0 inside group t.
VectorXd var_ybar(const Dataset& ds, const ImputedOutcomes& imputed, const MatchResult& matches,
                  const ConditionalVariances& sig, int t);

// Rows of A are e_j - e_k for each pair.
MatrixXd contrast_matrix(int num_treatments, const std::vector<Pair>& pairs);

CovarianceMatrix assemble_covariance(const VectorXd& var_ybar, const std::vector<Pair>& pairs);
CovarianceMatrix assemble_covariance(const VectorXd& var_ybar, int num_treatments);

// Comparator: sample covariance of D_q,i = yhat_i(j) - yhat_i(k) over group t, divided by n_t.
MatrixXd randomization_covariance(const Dataset& ds, const ImputedOutcomes& imputed, int t,
                                  const std::vector<Pair>& pairs = {});

// Attaches the newly proposed covariance to an estimate.
void attach_new_covariance(EffectEstimate& est, const Dataset& ds, const ImputedOutcomes& imputed,
                           const MatchResult& matches, const ConditionalVariances& sig);
void attach_randomization_covariance(EffectEstimate& est, const Dataset& ds, const ImputedOutcomes& imputed);

}  // namespace mtmatch
