#include "mtmatch/json_io.hpp"

#include <cmath>
#include <limits>

namespace mtmatch {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json vec(const VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
  return a;
}

Json mat(const MatrixXd& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vec(m.row(r).transpose()));
  return a;
}

double get_num(const Json& j) { return j.is_null() ? kNaN : j.get<double>(); }

VectorXd get_vec(const Json& j) {
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = get_num(j[i]);
  return v;
}

const std::string& label(const std::vector<std::string>& labels, int w) {
  if (w < 0 || w >= static_cast<int>(labels.size())) throw ValidationError("treatment code without a label");
  return labels[w];
}

Json by_label(const VectorXd& v, const std::vector<std::string>& labels) {
  Json o = Json::object();
  for (Eigen::Index w = 0; w < v.size(); ++w) o[label(labels, static_cast<int>(w))] = num(v(w));
  return o;
}

}  // namespace

std::string pair_name(const Pair& p, const std::vector<std::string>& labels) {
  return label(labels, p.j) + "-" + label(labels, p.k);
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

Json to_json(const EffectEstimate& est, const std::vector<std::string>& labels) {
  Json o;
  o["estimand"] = est.reference ? "att" : "ate";
  o["reference"] = est.reference ? Json(label(labels, *est.reference)) : Json(nullptr);
  o["estimator"] = to_string(est.estimator);
  o["se_method"] = to_string(est.se);
  o["m"] = est.m;
  o["J"] = est.J;
  Json pairs = Json::array();
  for (std::size_t q = 0; q < est.pairs.size(); ++q) {
    Json p;
    p["pair"] = pair_name(est.pairs[q], labels);
    p["j"] = label(labels, est.pairs[q].j);
    p["k"] = label(labels, est.pairs[q].k);
    p["estimate"] = num(est.tau_hat(static_cast<Eigen::Index>(q)));
    const auto qi = static_cast<Eigen::Index>(q);
    p["se"] = est.covariance ? num(std::sqrt(std::max(0.0, (*est.covariance)(qi, qi)))) : Json(nullptr);
    pairs.push_back(p);
  }
  o["pairs"] = pairs;
  o["ybar"] = by_label(est.ybar, labels);
  o["bias_terms"] = est.bias_terms ? by_label(*est.bias_terms, labels) : Json(nullptr);
  o["covariance"] = est.covariance ? mat(*est.covariance) : Json(nullptr);
  o["covariance_unreliable"] = est.covariance_unreliable;
  return o;
}

Json to_json(const InferenceReport& r, const std::vector<std::string>& labels) {
  Json o;
  o["z2"] = num(r.z2);
  o["df"] = r.df;
  o["p_value"] = num(r.p_value);
  o["alpha"] = num(r.alpha);
  o["region_radius2"] = num(r.region_radius2);
  Json iv = Json::array();
  for (const auto& pi : r.pair_intervals) {
    Json p;
    p["pair"] = pair_name(pi.pair, labels);
    p["estimate"] = num(pi.estimate);
    p["lo"] = num(pi.lower);
    p["hi"] = num(pi.upper);
    p["level"] = num(pi.level);
    iv.push_back(p);
  }
  o["intervals"] = iv;
  if (r.covered) o["covered"] = *r.covered;
  Json flags;
  flags["se_method"] = r.se_method;
  flags["uncorrected_bias_caveat"] = r.uncorrected_bias_caveat;
  flags["pseudo_inverse_used"] = r.pseudo_inverse_used;
  if (r.se_method == to_string(SeMethod::Randomization)) {
    flags["randomization_se_reading"] = "sample covariance of imputed differences over the reference group";
  }
  o["method_flags"] = flags;
  return o;
}

Json to_json(const OverlapReport& r, const std::vector<std::string>& labels, const std::vector<int>& source_rows) {
  Json o;
  o["eta"] = num(r.eta);
  o["min_score"] = by_label(r.min_score, labels);
  o["max_score"] = by_label(r.max_score, labels);
  o["flagged_count"] = r.flagged.size();
  Json rows = Json::array();
  for (int i : r.flagged) rows.push_back(i < static_cast<int>(source_rows.size()) ? source_rows[i] : i);
  o["flagged_rows"] = rows;
  return o;
}

Json to_json(const ComparatorEstimate& est, const std::vector<std::string>& labels) {
  Json o;
  o["method"] = to_string(est.method);
  o["reference"] = label(labels, est.reference);
  Json pairs = Json::array();
  for (std::size_t q = 0; q < est.pairs.size(); ++q) {
    Json p;
    p["pair"] = pair_name(est.pairs[q], labels);
    p["estimate"] = num(est.tau_hat(static_cast<Eigen::Index>(q)));
    p["se"] = num(est.se(static_cast<Eigen::Index>(q)));
    pairs.push_back(p);
  }
  o["pairs"] = pairs;
  o["mu"] = by_label(est.mu, labels);
  o["max_weight"] = by_label(est.max_weight, labels);
  o["effective_size"] = by_label(est.effective_size, labels);
  o["weight_cap"] = est.weight_cap ? Json(*est.weight_cap) : Json(nullptr);
  o["se_note"] = est.se_note;
  return o;
}

Json to_json(const GpsModel& gps, const Dataset& ds) {
  Json o;
  o["converged"] = gps.converged;
  o["iterations"] = gps.iterations;
  o["log_likelihood"] = num(gps.log_likelihood);
  o["gradient_norm"] = num(gps.gradient_norm);
  o["ridge"] = num(gps.ridge);
  Json rows = Json::array();
  for (Eigen::Index c = 0; c < gps.coefficients.rows(); ++c) {
    Json r;
    r["treatment"] = label(ds.labels(), static_cast<int>(c));
    r["coefficients"] = vec(gps.coefficients.row(c).transpose());
    r["standard_errors"] = vec(gps.standard_errors.row(c).transpose());
    rows.push_back(r);
  }
  o["reference_category"] = label(ds.labels(), ds.num_treatments() - 1);
  o["rows"] = rows;
  return o;
}

Json to_json(const SimConfig& c) {
  Json o;
  o["f"] = to_string(c.f);
  o["g"] = to_string(c.g);
  o["P"] = c.P;
  o["b"] = c.b;
  o["gamma"] = c.gamma;
  o["n1"] = c.n1;
  o["sigma2sq"] = c.sigma2sq;
  o["sigma3sq"] = c.sigma3sq;
  o["lambda"] = c.lambda;
  o["theta"] = c.theta;
  o["replications"] = c.replications;
  o["seed"] = c.seed;
  o["m"] = c.m;
  o["J"] = c.J;
  o["clusters"] = c.clusters;
  o["estimators"] = c.estimators;
  o["standardize_t"] = c.standardize_t;
  o["redraw_beta"] = c.redraw_beta;
  o["alpha"] = c.alpha;
  return o;
}

SimConfig sim_config_from_json(const Json& j) {
  SimConfig c;
  c.f = parse_covariate_dist(j.at("f").get<std::string>());
  c.g = parse_response_link(j.at("g").get<std::string>());
  c.P = j.at("P").get<int>();
  c.b = j.at("b").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.n1 = j.at("n1").get<int>();
  c.sigma2sq = j.at("sigma2sq").get<double>();
  c.sigma3sq = j.at("sigma3sq").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.theta = j.at("theta").get<double>();
  c.replications = j.at("replications").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.m = j.at("m").get<int>();
  c.J = j.at("J").get<int>();
  c.clusters = j.at("clusters").get<int>();
  c.estimators = j.at("estimators").get<std::vector<std::string>>();
  c.standardize_t = j.at("standardize_t").get<bool>();
  c.redraw_beta = j.at("redraw_beta").get<bool>();
  c.alpha = j.at("alpha").get<double>();
  return c;
}

Json to_json(const EstimatorMetrics& e) {
  Json o;
  o["name"] = e.name;
  o["replications"] = e.replications;
  o["region_coverage"] = num(e.region_coverage);
  o["interval_coverage"] = vec(e.interval_coverage);
  o["interval_coverage_mean"] = num(e.interval_coverage_mean);
  o["bias"] = vec(e.bias);
  o["abs_bias"] = num(e.abs_bias);
  o["median_abs_error"] = vec(e.median_abs_error);
  o["width"] = num(e.width);
  o["se_mean"] = vec(e.se_mean);
  o["empirical_sd"] = vec(e.empirical_sd);
  o["se_ratio"] = num(e.se_ratio);
  return o;
}

EstimatorMetrics estimator_metrics_from_json(const Json& j) {
  EstimatorMetrics e;
  e.name = j.at("name").get<std::string>();
  e.replications = j.at("replications").get<int>();
  e.region_coverage = get_num(j.at("region_coverage"));
  e.interval_coverage = get_vec(j.at("interval_coverage"));
  e.interval_coverage_mean = get_num(j.at("interval_coverage_mean"));
  e.bias = get_vec(j.at("bias"));
  e.abs_bias = get_num(j.at("abs_bias"));
  e.median_abs_error = get_vec(j.at("median_abs_error"));
  e.width = get_num(j.at("width"));
  e.se_mean = get_vec(j.at("se_mean"));
  e.empirical_sd = get_vec(j.at("empirical_sd"));
  e.se_ratio = get_num(j.at("se_ratio"));
  return e;
}

Json to_json(const SimReport& r) {
  Json o;
  o["id"] = r.id;
  o["config"] = to_json(r.config);
  o["canonical"] = r.config.canonical();
  o["replications"] = r.replications;
  o["completed"] = r.completed;
  o["failures"] = r.failures;
  o["failure_limit_exceeded"] = r.failure_limit_exceeded;
  o["failure_messages"] = r.failure_messages;
  o["true_tau_mean"] = vec(r.true_tau_mean);
  o["true_conditional_bias"] = vec(r.true_conditional_bias);
  o["ipw_max_weight"] = num(r.ipw_max_weight);
  Json es = Json::array();
  for (const auto& e : r.estimators) es.push_back(to_json(e));
  o["estimators"] = es;
  return o;
}

SimReport sim_report_from_json(const Json& j) {
  SimReport r;
  r.config = sim_config_from_json(j.at("config"));
  r.id = j.at("id").get<std::string>();
  if (r.id != r.config.id()) throw ValidationError("cell id " + r.id + " does not match its configuration");
  r.replications = j.at("replications").get<int>();
  r.completed = j.at("completed").get<int>();
  r.failures = j.at("failures").get<int>();
  r.failure_limit_exceeded = j.at("failure_limit_exceeded").get<bool>();
  r.failure_messages = j.at("failure_messages").get<std::vector<std::string>>();
  r.true_tau_mean = get_vec(j.at("true_tau_mean"));
  r.true_conditional_bias = get_vec(j.at("true_conditional_bias"));
  r.ipw_max_weight = get_num(j.at("ipw_max_weight"));
  for (const auto& e : j.at("estimators")) r.estimators.push_back(estimator_metrics_from_json(e));
  return r;
}

}  // namespace mtmatch
