#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mtmatch/data_model.hpp"

namespace mtmatch {

// Probabilities are clamped to [kProbabilityFloor, 1 - kProbabilityFloor] before logit.
inline constexpr double kProbabilityFloor = 1e-12;

struct GpsOptions {
  double tolerance = 1e-8;  // on the max-norm of the log-likelihood gradient
  int max_iterations = 100;
  double ridge = 0.0;  // L2 penalty on slopes; 0 = plain maximum likelihood
  // A linear predictor beyond this magnitude is treated as separation.
  double separation_threshold = 50.0;
};

/// Multinomial-logit generalized propensity score fit.
///
/// Row c of `coefficients` holds (intercept, slopes) for the log-odds of
/// treatment c against the reference treatment Z-1, whose row is fixed at 0
/// and not stored.
struct GpsModel {
  MatrixXd coefficients;     // (Z-1) x (P+1)
  MatrixXd standard_errors;  // from the inverse observed information
  MatrixXd scores;           // n x Z fitted probabilities
  bool converged = false;
  int iterations = 0;
  double log_likelihood = 0.0;
  double gradient_norm = 0.0;  // max-norm at the returned coefficients
  std::vector<double> log_likelihood_trace;
  double ridge = 0.0;

  int num_treatments() const { return static_cast<int>(scores.cols()); }
};

GpsModel fit_gps(const Dataset& ds, const GpsOptions& options = {});

// Fitted probabilities for arbitrary covariate rows.
MatrixXd predict_scores(const GpsModel& model, const MatrixXd& covariates);

// Gradient of the (penalised) log-likelihood, laid out like `coefficients`.
MatrixXd gps_gradient(const Dataset& ds, const MatrixXd& coefficients, double ridge = 0.0);
double gps_log_likelihood(const Dataset& ds, const MatrixXd& coefficients);

MatrixXd clamp_probabilities(const MatrixXd& probabilities);
double clamped_logit(double p);
MatrixXd logit_scores(const MatrixXd& probabilities);
MatrixXd logit_scores(const GpsModel& model);

struct OverlapReport {
  double eta = 0.0;
  VectorXd min_score;  // per treatment column, over all units
  VectorXd max_score;
  std::vector<int> flagged;  // units with any score <= eta or >= 1 - eta
};

OverlapReport overlap_report(const GpsModel& model, double eta);

// Rows: non-reference treatments; columns: intercept then covariates.
void write_coefficients_csv(std::ostream& out, const GpsModel& model, const Dataset& ds);

}  // namespace mtmatch
