#include "mtmatch/analyze.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "mtmatch/data_model.hpp"
#include "mtmatch/format.hpp"
#include "mtmatch/json_io.hpp"
#include "mtmatch/matching.hpp"
#include "mtmatch/report.hpp"

namespace mtmatch {

namespace fs = std::filesystem;

void AnalyzeOptions::check() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
  if (m < 1) throw ValidationError("m must be >= 1");
  if (J < 1) throw ValidationError("J must be >= 1");
  if (K < 1) throw ValidationError("K must be >= 1");
  if (!(eta > 0.0 && eta < 0.5)) throw ValidationError("eta must lie in (0, 0.5)");
  if (estimator != "basic" && estimator != "bc") throw ValidationError("estimator must be basic or bc");
  if (se != "new" && se != "randomization") throw ValidationError("se must be new or randomization");
  if (sigma2 != "auto" && sigma2 != "raw" && sigma2 != "residual") {
    throw ValidationError("sigma2 must be auto, raw or residual");
  }
  if (distance != "vector") parse_distance_kind(distance);
  if (!(ridge >= 0.0)) throw ValidationError("ridge must be >= 0");
}

namespace {

int reference_code(const Dataset& ds, const std::string& label) {
  const auto& labels = ds.labels();
  for (std::size_t w = 0; w < labels.size(); ++w) {
    if (labels[w] == label) return static_cast<int>(w);
  }
  throw ValidationError("reference treatment '" + label + "' does not occur in column '" + ds.treatment_column + "'");
}

ReferenceAnalysis analyze_reference(const Dataset& ds, const GpsModel& gps, const MatchResult& within,
                                    const std::optional<GroupRegression>& regs, int t, const AnalyzeOptions& o,
                                    const std::function<void(const char*)>& enter) {
  ReferenceAnalysis ra;
  enter("matching");
  ra.reference = t;
  MatchResult cross;
  if (o.distance == "vector") {
    VectorMatchOptions vo;
    vo.clusters = o.K;
    vo.seed = o.seed;
    cross = vector_match(ds, gps, t, o.m, vo);
  } else {
    const Metric metric = distance_matrix(ds, &gps, parse_distance_kind(o.distance));
    cross = knn_match(ds, metric, o.m, EstimandSpec::att(t));
  }
  const MatchResult matches = with_within(cross, within);
  ra.distance_spec = matches.distance_spec;

  enter("estimation");
  const bool bc = o.estimator == "bc";
  const ImputedOutcomes imputed = bc ? impute_bias_corrected(ds, matches, *regs) : impute_basic(ds, matches);
  ra.estimate = bc ? estimate_att_bias_corrected(ds, matches, *regs, t) : estimate_att(ds, imputed, matches, t);
  enter("variance");
  if (o.se == "new") {
    const bool residual = o.sigma2 == "residual" || (o.sigma2 == "auto" && regs.has_value());
    const ConditionalVariances sig = residual ? sigma2_residual(ds, matches, *regs) : sigma2_raw(ds, matches);
    ra.sigma2_method = to_string(sig.method);
    attach_new_covariance(ra.estimate, ds, imputed, matches, sig);
  } else {
    attach_randomization_covariance(ra.estimate, ds, imputed);
  }
  ra.estimate.covariance_unreliable = ds.group_size(t) == 1;
  enter("inference");
  InferenceOptions io;
  io.pseudo_inverse = o.pseudo_inverse;
  ra.inference = global_test(ra.estimate, VectorXd::Zero(ra.estimate.tau_hat.size()), o.alpha, io);
  return ra;
}

bool regression_feasible(const Dataset& ds, bool interactions) {
  GroupRegression probe;
  probe.num_covariates = ds.num_covariates();
  probe.interactions = interactions;
  for (int w = 0; w < ds.num_treatments(); ++w) {
    if (ds.group_size(w) <= probe.design_size()) return false;
  }
  return true;
}

void write_file(const fs::path& path, const std::string& text, std::vector<fs::path>& files) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw ValidationError("cannot write " + path.string());
  files.push_back(path);
}

}  // namespace

AnalysisResult run_analysis(const Dataset& ds, const AnalyzeOptions& o, std::string* stage) {
  auto enter = [&](const char* name) {
    if (stage) *stage = name;
  };
  o.check();
  AnalysisResult res;
  enter("gps");
  GpsOptions go;
  go.ridge = o.ridge;
  res.gps = fit_gps(ds, go);
  res.overlap = overlap_report(res.gps, o.eta);

  enter("outcome regression");
  std::optional<GroupRegression> regs;
  const bool need_regs = o.estimator == "bc" || o.sigma2 == "residual" || (o.se == "new" && o.sigma2 == "auto");
  if (need_regs) {
    if (o.estimator == "bc" || o.sigma2 == "residual" || regression_feasible(ds, o.interactions)) {
      regs = fit_group_regressions(ds, o.interactions);
    }
  }
  enter("matching");
  const MatchResult within = within_group_match(ds, res.gps, o.J);

  if (o.reference == "all") {
    std::vector<EffectEstimate> per;
    for (int t = 0; t < ds.num_treatments(); ++t) {
      res.per_reference.push_back(analyze_reference(ds, res.gps, within, regs, t, o, enter));
      per.push_back(res.per_reference.back().estimate);
    }
    res.ate = estimate_ate(ds, per);
  } else {
    const int t = o.reference.empty() ? 0 : reference_code(ds, o.reference);
    res.per_reference.push_back(analyze_reference(ds, res.gps, within, regs, t, o, enter));
  }
  return res;
}

std::string summary_text(const Dataset& ds, const AnalysisResult& res, const AnalyzeOptions& o) {
  const auto& labels = ds.labels();
  std::ostringstream os;
  os << "Data: " << ds.n() << " units, " << ds.num_covariates() << " covariates, treatment column '"
     << ds.treatment_column << "', outcome column '" << ds.outcome_column << "'\n";
  os << "Groups:";
  for (int w = 0; w < ds.num_treatments(); ++w) os << " " << labels[w] << " (n=" << ds.group_size(w) << ")";
  os << "\n";
  os << "GPS: multinomial logit, " << (res.gps.converged ? "converged" : "NOT converged") << " after "
     << res.gps.iterations << " iterations, log-likelihood " << format_fixed(res.gps.log_likelihood, 4) << "\n";
  os << "Overlap: " << res.overlap.flagged.size() << " units with a score outside [" << format_double(o.eta) << ", "
     << format_double(1.0 - o.eta) << "]\n";
  os << "Estimator: " << (o.estimator == "bc" ? "bias-corrected" : "basic") << " matching, m=" << o.m
     << ", SE: " << (o.se == "new" ? "matching variance (J=" + std::to_string(o.J) + ")" : "randomization-based")
     << ", alpha=" << format_double(o.alpha) << "\n";
  for (const auto& ra : res.per_reference) {
    os << "\nATT, reference group " << labels[ra.reference] << " (" << ra.distance_spec << ")\n";
    std::vector<std::vector<std::string>> rows = {{"pair", "estimate", "se", "lower", "upper"}};
    for (std::size_t q = 0; q < ra.estimate.pairs.size(); ++q) {
      const auto& iv = ra.inference.pair_intervals[q];
      const auto qi = static_cast<Eigen::Index>(q);
      rows.push_back({pair_name(ra.estimate.pairs[q], labels), format_fixed(ra.estimate.tau_hat(qi), 4),
                      format_fixed(std::sqrt((*ra.estimate.covariance)(qi, qi)), 4), format_fixed(iv.lower, 4),
                      format_fixed(iv.upper, 4)});
    }
    os << align_columns(rows);
    os << "Global test of no differences: z2 = " << format_fixed(ra.inference.z2, 4) << ", df = " << ra.inference.df
       << ", p = " << format_fixed(ra.inference.p_value, 4) << "\n";
    if (ra.inference.uncorrected_bias_caveat) {
      os << "Note: the basic estimator's test ignores its conditional matching bias.\n";
    }
    if (ra.estimate.covariance_unreliable) os << "Note: reference group has one unit; covariance unreliable.\n";
  }
  if (res.ate) {
    os << "\nATE (sample-share weighted over references, point estimates only)\n";
    for (std::size_t q = 0; q < res.ate->pairs.size(); ++q) {
      os << "  " << pair_name(res.ate->pairs[q], labels) << "  "
         << format_fixed(res.ate->tau_hat(static_cast<Eigen::Index>(q)), 4) << "\n";
    }
  }
  return os.str();
}

AnalysisDocuments analysis_documents(const Dataset& ds, const AnalysisResult& res) {
  const auto& labels = ds.labels();
  Json est, inf;
  if (res.ate) {
    est["estimand"] = "ate";
    est["ate"] = to_json(*res.ate, labels);
    Json per = Json::array(), per_inf = Json::array();
    for (const auto& ra : res.per_reference) {
      Json e = to_json(ra.estimate, labels);
      e["distance"] = ra.distance_spec;
      e["sigma2_method"] = ra.sigma2_method.empty() ? Json(nullptr) : Json(ra.sigma2_method);
      per.push_back(e);
      Json i = to_json(ra.inference, labels);
      i["reference"] = labels[ra.reference];
      per_inf.push_back(i);
    }
    est["per_reference"] = per;
    inf["per_reference"] = per_inf;
  } else {
    const auto& ra = res.per_reference.front();
    est = to_json(ra.estimate, labels);
    est["distance"] = ra.distance_spec;
    est["sigma2_method"] = ra.sigma2_method.empty() ? Json(nullptr) : Json(ra.sigma2_method);
    inf = to_json(ra.inference, labels);
    inf["reference"] = labels[ra.reference];
  }
  est["gps"] = to_json(res.gps, ds);
  return {dump(est), dump(inf), dump(to_json(res.overlap, labels, ds.source_rows()))};
}

AnalyzeOutcome analyze(const AnalyzeOptions& o) {
  AnalyzeOutcome outcome;
  std::string current = "options";
  auto stage = [&](const char* name) { current = name; };
  try {
    o.check();
    stage("read");
    if (!fs::exists(o.data)) throw ValidationError("data file '" + o.data.string() + "' does not exist");
    const RawTable raw = read_csv(o.data);
    stage("validate");
    const Dataset ds = validate(raw, ColumnMapping{o.treatment, o.outcome, o.covariates});
    stage("estimate");
    const AnalysisResult res = run_analysis(ds, o, &current);

    stage("write");
    fs::create_directories(o.out);
    const AnalysisDocuments docs = analysis_documents(ds, res);
    write_file(o.out / "estimate.json", docs.estimate, outcome.files);
    write_file(o.out / "inference.json", docs.inference, outcome.files);
    write_file(o.out / "overlap.json", docs.overlap, outcome.files);
    write_file(o.out / "summary.txt", summary_text(ds, res, o), outcome.files);
    outcome.message = "wrote " + std::to_string(outcome.files.size()) + " files to " + o.out.string();
  } catch (const NumericalError& e) {
    outcome.exit_code = 3;
    outcome.message = "numerical failure during " + current + ": " + e.what();
  } catch (const std::exception& e) {
    outcome.exit_code = 2;
    outcome.message = "validation error during " + current + ": " + e.what();
  }
  return outcome;
}

}  // namespace mtmatch
