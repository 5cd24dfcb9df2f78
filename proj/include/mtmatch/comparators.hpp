#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mtmatch/estimators.hpp"
#include "mtmatch/gps.hpp"

namespace mtmatch {

enum class ComparatorKind { Ipw, Dr };

std::string to_string(ComparatorKind kind);

struct ComparatorOptions {
  // Upper bound applied to every weight; unset means no truncation.
  std::optional<double> weight_cap;
};

/// IPW or DR estimate of the pairwise ATT vector for one reference group.
///
/// Standard errors come from a weight-fixed linearization: the GPS is
/// treated as known, so the uncertainty of its fit is not propagated.
struct ComparatorEstimate {
  ComparatorKind method = ComparatorKind::Ipw;
  int reference = 0;
  std::vector<Pair> pairs;
  VectorXd tau_hat;
  VectorXd se;
  MatrixXd covariance;  // sum of outer products of per-unit contributions
  VectorXd mu;          // per-treatment weighted mean (IPW) or augmented mean (DR)
  VectorXd max_weight;  // per treatment; 1 for the reference group
  VectorXd effective_size;
  std::optional<double> weight_cap;
  std::string se_note = "weight-fixed plug-in";
};

// u_i = r(t, X_i) / r(W_i, X_i), 1 for the reference group, computed on clamped scores.
VectorXd comparator_weights(const Dataset& ds, const MatrixXd& scores, int t, const ComparatorOptions& options = {});

ComparatorEstimate ipw_att(const Dataset& ds, const MatrixXd& scores, int t, const std::vector<Pair>& pairs = {},
                           const ComparatorOptions& options = {});
ComparatorEstimate ipw_att(const Dataset& ds, const GpsModel& gps, int t, const std::vector<Pair>& pairs = {},
                           const ComparatorOptions& options = {});

// `mu` is the n x Z matrix of outcome-model predictions mu_w(X_i).
ComparatorEstimate dr_att(const Dataset& ds, const MatrixXd& scores, const MatrixXd& mu, int t,
                          const std::vector<Pair>& pairs = {}, const ComparatorOptions& options = {});
ComparatorEstimate dr_att(const Dataset& ds, const GpsModel& gps, const GroupRegression& regs, int t,
                          const std::vector<Pair>& pairs = {}, const ComparatorOptions& options = {});

}  // namespace mtmatch
