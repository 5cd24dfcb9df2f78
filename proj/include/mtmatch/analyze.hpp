#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mtmatch/estimators.hpp"
#include "mtmatch/gps.hpp"
#include "mtmatch/inference.hpp"
#include "mtmatch/variance.hpp"

namespace mtmatch {

struct AnalyzeOptions {
  std::filesystem::path data;
  std::string treatment;
  std::string outcome;
  std::vector<std::string> covariates;  // empty: every other numeric column
  std::string reference;                // treatment label, or "all" for the overall ATE; empty: first label
  std::string estimator = "bc";         // basic | bc
  std::string se = "new";               // new | randomization
  std::string distance = "vector";      // vector | logit-gps | mahalanobis | euclid
  std::string sigma2 = "auto";          // auto | raw | residual
  int m = 1;
  int J = 1;
  int K = 5;
  double alpha = 0.05;
  double eta = 0.01;
  std::uint64_t seed = 20170101;
  bool interactions = false;
  bool pseudo_inverse = false;
  double ridge = 0.0;
  std::filesystem::path out = "analysis";

  void check() const;
};

/// Everything computed for one reference group.
struct ReferenceAnalysis {
  int reference = 0;
  EffectEstimate estimate;
  InferenceReport inference;
  std::string distance_spec;
  std::string sigma2_method;  // empty for randomization SEs
};

struct AnalysisResult {
  GpsModel gps;
  OverlapReport overlap;
  std::vector<ReferenceAnalysis> per_reference;
  std::optional<EffectEstimate> ate;  // set when reference = all
};

// In-memory pipeline on an already validated dataset. `stage`, when given,
// tracks the step in progress for error messages.
AnalysisResult run_analysis(const Dataset& ds, const AnalyzeOptions& options, std::string* stage = nullptr);

// estimate.json, inference.json and overlap.json contents.
struct AnalysisDocuments {
  std::string estimate;
  std::string inference;
  std::string overlap;
};

AnalysisDocuments analysis_documents(const Dataset& ds, const AnalysisResult& result);

struct AnalyzeOutcome {
  int exit_code = 0;  // 0 success, 2 validation error, 3 numerical failure
  std::string message;
  std::vector<std::filesystem::path> files;
};

// Reads, validates, runs and writes estimate.json, inference.json,
// overlap.json and summary.txt under options.out. Errors are caught and
// mapped to exit codes with a message naming the failing stage.
AnalyzeOutcome analyze(const AnalyzeOptions& options);

std::string summary_text(const Dataset& ds, const AnalysisResult& result, const AnalyzeOptions& options);

}  // namespace mtmatch
