#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mtmatch/data_model.hpp"
#include "mtmatch/gps.hpp"
#include "mtmatch/kmeans.hpp"

namespace mtmatch {

double squared_distance(const double* a, const double* b, int dims);

enum class DistanceKind { LogitGpsEuclid, MahalanobisCovariates, EuclidCovariates };

std::string to_string(DistanceKind kind);
DistanceKind parse_distance_kind(const std::string& text);

/// Distance between units, evaluated as Euclidean distance between rows of a
/// feature embedding (logit GPS, raw covariates, or whitened covariates).
class Metric {
 public:
  static Metric from_features(MatrixXd features, std::string description);

  double squared(int i, int j) const;
  double distance(int i, int j) const;
  int dims() const { return static_cast<int>(features_.cols()); }
  const MatrixXd& features() const { return features_; }
  const std::string& description() const { return description_; }

 private:
  Metric(MatrixXd features, std::string description)
      : features_(std::move(features)), description_(std::move(description)) {}

  MatrixXd features_;
  std::string description_;
};

// `gps` is required only for LogitGpsEuclid. Mahalanobis uses the sample
// covariance of all units pooled across groups; a singular covariance throws with its smallest eigenvalue.
Metric distance_matrix(const Dataset& ds, const GpsModel* gps, DistanceKind kind);

/// Match sets produced by one matching run.
///
/// cross(i, w) is M_i^w: the m units of group w matched to unit i (empty when
/// unit i needs no imputation for w under the run's scope). within(i) is
/// L_i: the J nearest units of i's own group. psi(i, w) counts how many
/// group-w units use unit i as a match.
struct MatchResult {
  int n = 0;
  int num_treatments = 0;
  int m = 0;
  int J = 0;
  std::optional<int> reference;  // scope: nullopt means every unit is imputed
  std::vector<std::vector<int>> cross_matches;       // n * Z, row-major by unit
  std::vector<std::vector<double>> cross_distances;  // parallel to cross_matches
  std::vector<std::vector<int>> within_matches;      // n (empty unless J > 0)
  MatrixXi psi;                                      // n x Z
  std::string distance_spec;
  // Vector matching only: cluster assignment used for each target group.
  std::vector<std::vector<int>> strata;

  const std::vector<int>& cross(int i, int w) const { return cross_matches[static_cast<std::size_t>(i) * num_treatments + w]; }
  const std::vector<int>& within(int i) const { return within_matches[i]; }
  bool needs_imputation(int /*i*/, int treatment_of_i) const {
    return !reference || treatment_of_i == *reference;
  }
};

struct MatchOptions {
  // Exact kd-tree search for metrics of dimension <= 10; identical output to the scan.
  bool use_kdtree = true;
};

MatchResult knn_match(const Dataset& ds, const Metric& metric, int m, const EstimandSpec& scope,
                      const MatchOptions& options = {});

struct VectorMatchOptions {
  int clusters = 5;
  int restarts = 10;
  std::uint64_t seed = 20170101;
};

// k-means seed used for reference t and target w.
std::uint64_t vector_match_seed(std::uint64_t base, int t, int w);

MatchResult vector_match(const Dataset& ds, const GpsModel& gps, int t, int m,
                         const VectorMatchOptions& options = {});

// Same-group matches on squared Euclidean distance of the full logit-GPS vector.
MatchResult within_group_match(const Dataset& ds, const GpsModel& gps, int J,
                               const MatchOptions& options = {});

// Copies the within-group sets of `within` into `cross`.
MatchResult with_within(MatchResult cross, const MatchResult& within);

// Recomputes psi from the cross match sets.
MatrixXi usage_counts(const Dataset& ds, const MatchResult& matches);

void write_matches_csv(std::ostream& out, const Dataset& ds, const MatchResult& matches);

}  // namespace mtmatch
