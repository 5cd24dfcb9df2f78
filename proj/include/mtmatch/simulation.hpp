#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mtmatch/data_model.hpp"

namespace mtmatch {

enum class CovariateDist { Normal, T7 };
enum class ResponseLink { Identity, Exp };

std::string to_string(CovariateDist f);
std::string to_string(ResponseLink g);
CovariateDist parse_covariate_dist(const std::string& text);
ResponseLink parse_response_link(const std::string& text);

// Estimator/SE combinations evaluated by the harness.
const std::vector<std::string>& all_sim_estimators();

/// One cell of the factorial design, three treatment groups of sizes
/// n1, gamma n1, gamma^2 n1.
struct SimConfig {
  CovariateDist f = CovariateDist::Normal;
  ResponseLink g = ResponseLink::Identity;
  int P = 3;
  double b = 0.0;
  double gamma = 1.0;
  int n1 = 300;
  double sigma2sq = 1.0;
  double sigma3sq = 1.0;
  double lambda = 0.0;
  double theta = 1.0;
  int replications = 200;
  std::uint64_t seed = 1;
  int m = 1;
  int J = 1;
  int clusters = 5;
  std::vector<std::string> estimators = all_sim_estimators();
  bool standardize_t = false;  // rescale t7 draws to unit variance
  bool redraw_beta = false;    // draw beta_w per replication instead of once per cell
  double alpha = 0.05;

  std::vector<int> group_sizes() const;
  // Covariance of group w (0-based): diagonal 1, sigma2sq or sigma3sq, lambda elsewhere.
  MatrixXd covariance(int w) const;
  VectorXd mean(int w) const;
  // Throws ValidationError on any invalid field, including a non-PD covariance.
  void check() const;
  // Stable textual form of every field; the cell id hashes it.
  std::string canonical() const;
  std::string id() const;
};

struct SimDataset {
  Dataset data;
  MatrixXd potential;  // n x 3 potential outcomes Y_i(w)
  MatrixXd mu;         // n x 3 noise-free response g(X_i)^T beta_w
  MatrixXd beta;       // P x 3
};

// Coefficients beta_w ~ Uniform(-theta, theta), columns by treatment.
MatrixXd draw_beta(const SimConfig& cfg, std::uint64_t seed);
std::uint64_t beta_seed(const SimConfig& cfg, int rep);

SimDataset generate_dataset(const SimConfig& cfg, int rep);
SimDataset generate_dataset(const SimConfig& cfg, int rep, const MatrixXd& beta);

// Sample ATT vector over group t, pairs in all_pairs order.
VectorXd true_estimands(const MatrixXd& potential, const std::vector<int>& treatments, int t);

struct EstimatorMetrics {
  std::string name;
  int replications = 0;
  double region_coverage = 0.0;  // NaN for IPW / DR, which estimate pairs separately
  VectorXd interval_coverage;    // per pair
  double interval_coverage_mean = 0.0;
  VectorXd bias;                 // per pair, mean of tau_hat - tau
  double abs_bias = 0.0;         // mean over pairs of |bias|
  VectorXd median_abs_error;     // per pair
  double width = 0.0;            // mean Bonferroni interval width, averaged over pairs
  VectorXd se_mean;              // per pair
  VectorXd empirical_sd;         // per pair, SD of tau_hat across replications
  double se_ratio = 0.0;         // mean over pairs of se_mean / empirical_sd; NaN if undefined
};

struct SimReport {
  SimConfig config;
  std::string id;
  int replications = 0;
  int completed = 0;
  int failures = 0;
  bool failure_limit_exceeded = false;  // more than 5% of replications failed
  std::vector<std::string> failure_messages;  // first few, for diagnosis
  VectorXd true_tau_mean;
  VectorXd true_conditional_bias;  // mean over replications of the basic estimator's bias given X, W
  double ipw_max_weight = 0.0;     // largest IPW weight seen in any replication
  std::vector<EstimatorMetrics> estimators;

  const EstimatorMetrics* find(const std::string& name) const;
};

// Per-replication outcome, kept for aggregation and testing.
struct ReplicationResult {
  bool ok = false;
  std::string error;
  VectorXd true_tau;
  VectorXd true_conditional_bias;
  double ipw_max_weight = 0.0;
  // Indexed like cfg.estimators.
  std::vector<VectorXd> tau_hat;
  std::vector<VectorXd> se;
  std::vector<double> region_covered;  // 1, 0 or NaN
};

ReplicationResult run_replication(const SimConfig& cfg, int rep, const MatrixXd& beta);

struct RunOptions {
  int workers = 1;
};

SimReport run_cell(const SimConfig& cfg, const RunOptions& options = {});
SimReport aggregate(const SimConfig& cfg, const std::vector<ReplicationResult>& reps);

struct Quantiles {
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

// Linear interpolation between order statistics; NaN entries are skipped.
Quantiles quantiles(std::vector<double> values);

// Called after each cell finishes, in grid order.
using CellCallback = std::function<void(const SimReport&)>;

// Runs every cell whose id is not in `skip`; duplicate ids are rejected.
std::vector<SimReport> run_factorial(const std::vector<SimConfig>& grid, const RunOptions& options = {},
                                     const std::vector<std::string>& skip = {}, const CellCallback& done = {},
                                     std::optional<int> stop_after = std::nullopt);

}  // namespace mtmatch
