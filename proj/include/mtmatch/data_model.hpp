#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mtmatch/common.hpp"

namespace mtmatch {

// Header plus string cells, as read from a CSV file.
struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

RawTable parse_csv(std::istream& in);
RawTable read_csv(const std::filesystem::path& path);

struct ColumnMapping {
  std::string treatment;
  std::string outcome;
  // Empty: every remaining numeric column is a covariate.
  std::vector<std::string> covariates;
};

/// Observational dataset: covariates X (n x P), treatment codes W, outcomes Y.
///
/// Treatment codes are 0-based internally (0..Z-1); code w reports as the
/// original label `labels()[w]`. Codes are assigned in order of first
/// appearance. The object is immutable after construction.
class Dataset {
 public:
  Dataset(MatrixXd covariates, std::vector<int> treatments, VectorXd outcomes,
          std::vector<std::string> labels = {}, std::vector<std::string> covariate_names = {});

  int n() const { return static_cast<int>(treatments_.size()); }
  int num_treatments() const { return static_cast<int>(groups_.size()); }
  int num_covariates() const { return static_cast<int>(covariates_.cols()); }

  const MatrixXd& covariates() const { return covariates_; }
  const std::vector<int>& treatments() const { return treatments_; }
  int treatment(int i) const { return treatments_[i]; }
  const VectorXd& outcomes() const { return outcomes_; }

  int group_size(int w) const { return static_cast<int>(groups_[w].size()); }
  // Unit indices with W_i = w, ascending.
  const std::vector<int>& group(int w) const { return groups_[w]; }

  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  // Row of each unit in the table this dataset was derived from.
  const std::vector<int>& source_rows() const { return source_rows_; }

  std::string treatment_column = "treatment";
  std::string outcome_column = "outcome";

  Dataset with_source_rows(std::vector<int> rows) const;

  friend bool operator==(const Dataset& a, const Dataset& b);

 private:
  MatrixXd covariates_;
  std::vector<int> treatments_;
  VectorXd outcomes_;
  std::vector<std::string> labels_;
  std::vector<std::string> covariate_names_;
  std::vector<std::vector<int>> groups_;
  std::vector<int> source_rows_;
};

// Reference group of an estimand, or nullopt for the overall (ALL) estimand.
struct EstimandSpec {
  std::optional<int> reference;
  std::vector<Pair> pairs;  // empty means all_pairs(Z)

  static EstimandSpec att(int t) { return {t, {}}; }
  static EstimandSpec ate() { return {std::nullopt, {}}; }

  std::vector<Pair> resolved_pairs(int num_treatments) const;
  void check(int num_treatments) const;
};

Dataset validate(const RawTable& raw, const ColumnMapping& columns);

// Splits on a discrete covariate (at most 10 distinct values). Subsamples are
// ordered by value; the splitting column is dropped from each of them.
std::vector<Dataset> subsample_by_discrete(const Dataset& ds, int column);

void write_csv(std::ostream& out, const Dataset& ds);
RawTable to_table(const Dataset& ds);

}  // namespace mtmatch
