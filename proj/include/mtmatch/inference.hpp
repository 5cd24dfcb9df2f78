#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mtmatch/estimators.hpp"

namespace mtmatch {

struct PairInterval {
  Pair pair;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.0;  // per-pair alpha after Bonferroni adjustment
};

struct InferenceOptions {
  // Use a pseudo-inverse (df = rank) instead of failing on a singular covariance.
  bool pseudo_inverse = false;
};

struct InferenceReport {
  double z2 = 0.0;
  int df = 0;
  double p_value = 1.0;
  double alpha = 0.05;
  double region_radius2 = 0.0;  // chi-square (1 - alpha) quantile with df degrees of freedom
  std::vector<PairInterval> pair_intervals;
  std::optional<std::vector<bool>> covered;
  // The basic estimator's statistic is centred at tau + conditional bias,
  // which is not observable; the report carries that caveat.
  bool uncorrected_bias_caveat = false;
  bool pseudo_inverse_used = false;  // rank fell below the pair structure's rank
  std::string se_method;
};

// Quadratic form d^T Sigma^{-1} d computed by solving Sigma x = d. When the
// pairs are linearly dependent (all pairs of Z >= 3 treatments span only Z-1
// dimensions) Sigma is singular by construction; pass that rank as
// `structural_rank` and the Moore-Penrose inverse is used with df = rank.
// Singularity beyond it throws unless options.pseudo_inverse is set.
double quadratic_form(const MatrixXd& covariance, const VectorXd& d, const InferenceOptions& options = {},
                      int* rank = nullptr, int structural_rank = -1);

// Rank of the contrast matrix of `pairs`.
int structural_rank(const std::vector<Pair>& pairs);

InferenceReport global_test(const EffectEstimate& est, const VectorXd& null_tau, double alpha,
                            const InferenceOptions& options = {});

bool region_covers(const EffectEstimate& est, const VectorXd& true_tau, double alpha,
                   const InferenceOptions& options = {});

std::vector<PairInterval> bonferroni_intervals(const EffectEstimate& est, double alpha);

// z quantile for the Bonferroni-adjusted two-sided level alpha / p.
double bonferroni_quantile(double alpha, int p);

}  // namespace mtmatch
