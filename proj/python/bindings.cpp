#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mtmatch/analyze.hpp"
#include "mtmatch/comparators.hpp"
#include "mtmatch/gps.hpp"
#include "mtmatch/inference.hpp"
#include "mtmatch/json_io.hpp"
#include "mtmatch/matching.hpp"
#include "mtmatch/report.hpp"
#include "mtmatch/simulation.hpp"

namespace py = pybind11;
using namespace mtmatch;

namespace {

// Treatment labels become codes in order of first appearance, as in validate().
Dataset make_dataset(const MatrixXd& x, const std::vector<std::string>& treatment, const VectorXd& y) {
  if (x.rows() != static_cast<Eigen::Index>(treatment.size()) || y.size() != x.rows()) {
    throw ValidationError("x, treatment and y must have the same number of rows");
  }
  std::vector<std::string> labels;
  std::vector<int> codes;
  codes.reserve(treatment.size());
  for (const auto& t : treatment) {
    auto it = std::find(labels.begin(), labels.end(), t);
    if (it == labels.end()) {
      labels.push_back(t);
      it = labels.end() - 1;
    }
    codes.push_back(static_cast<int>(it - labels.begin()));
  }
  std::vector<std::string> names;
  for (Eigen::Index c = 0; c < x.cols(); ++c) names.push_back("x" + std::to_string(c + 1));
  return Dataset(x, codes, y, labels, names);
}

int code_of(const Dataset& ds, const std::string& label) {
  const auto& labels = ds.labels();
  for (std::size_t w = 0; w < labels.size(); ++w) {
    if (labels[w] == label) return static_cast<int>(w);
  }
  throw ValidationError("reference treatment '" + label + "' does not occur in the data");
}

GpsModel fit(const Dataset& ds, double ridge) {
  GpsOptions go;
  go.ridge = ridge;
  return fit_gps(ds, go);
}

std::vector<Pair> to_pairs(const std::vector<std::pair<int, int>>& raw) {
  std::vector<Pair> out;
  for (const auto& [j, k] : raw) out.push_back({j, k});
  return out;
}

py::dict analyze_arrays(const MatrixXd& x, const std::vector<std::string>& treatment, const VectorXd& y,
                        const std::string& reference, const std::string& estimator, const std::string& se,
                        const std::string& distance, const std::string& sigma2, int m, int J, int K, double alpha,
                        double eta, std::uint64_t seed, bool interactions, bool pseudo_inverse, double ridge) {
  AnalyzeOptions o;
  o.reference = reference;
  o.estimator = estimator;
  o.se = se;
  o.distance = distance;
  o.sigma2 = sigma2;
  o.m = m;
  o.J = J;
  o.K = K;
  o.alpha = alpha;
  o.eta = eta;
  o.seed = seed;
  o.interactions = interactions;
  o.pseudo_inverse = pseudo_inverse;
  o.ridge = ridge;
  const Dataset ds = make_dataset(x, treatment, y);
  const AnalysisResult res = run_analysis(ds, o);
  const AnalysisDocuments docs = analysis_documents(ds, res);
  py::dict out;
  out["estimate"] = docs.estimate;
  out["inference"] = docs.inference;
  out["overlap"] = docs.overlap;
  out["summary"] = summary_text(ds, res, o);
  return out;
}

py::dict match_arrays(const MatrixXd& x, const std::vector<std::string>& treatment, const std::string& reference,
                      int m, int J, const std::string& distance, int K, std::uint64_t seed, double ridge) {
  const Dataset ds = make_dataset(x, treatment, VectorXd::Zero(x.rows()));
  const int t = code_of(ds, reference);
  const GpsModel gps = fit(ds, ridge);
  MatchResult cross;
  if (distance == "vector") {
    VectorMatchOptions vo;
    vo.clusters = K;
    vo.seed = seed;
    cross = vector_match(ds, gps, t, m, vo);
  } else {
    cross = knn_match(ds, distance_matrix(ds, &gps, parse_distance_kind(distance)), m, EstimandSpec::att(t));
  }
  const MatchResult res = J > 0 ? with_within(cross, within_group_match(ds, gps, J)) : cross;
  // cross[i][w] lists the group-w matches of unit i; empty outside the reference group.
  std::vector<std::vector<std::vector<int>>> sets(ds.n());
  for (int i = 0; i < ds.n(); ++i) {
    for (int w = 0; w < ds.num_treatments(); ++w) sets[i].push_back(res.cross(i, w));
  }
  py::dict out;
  out["labels"] = ds.labels();
  out["reference"] = t;
  out["cross"] = sets;
  out["within"] = res.within_matches;
  out["psi"] = MatrixXi(res.psi);
  out["distance"] = res.distance_spec;
  return out;
}

std::string comparator(bool dr, const MatrixXd& x, const std::vector<std::string>& treatment, const VectorXd& y,
                       const std::string& reference, std::optional<double> weight_cap, double ridge) {
  const Dataset ds = make_dataset(x, treatment, y);
  const int t = code_of(ds, reference);
  const GpsModel gps = fit(ds, ridge);
  ComparatorOptions co;
  co.weight_cap = weight_cap;
  const ComparatorEstimate est =
      dr ? dr_att(ds, gps, fit_group_regressions(ds), t, {}, co) : ipw_att(ds, gps, t, {}, co);
  return dump(to_json(est, ds.labels()));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Matching estimators for multiple treatments";

  static PyObject* validation_type = py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError).ptr();
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  // Malformed simulation configs surface as ValidationError too.
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const nlohmann::json::exception& e) {
      PyErr_SetString(validation_type, e.what());
    }
  });

  m.def(
      "fit_gps",
      [](const MatrixXd& x, const std::vector<std::string>& treatment, double ridge) {
        const Dataset ds = make_dataset(x, treatment, VectorXd::Zero(x.rows()));
        const GpsModel g = fit(ds, ridge);
        py::dict out;
        out["labels"] = ds.labels();
        out["coefficients"] = g.coefficients;
        out["standard_errors"] = g.standard_errors;
        out["scores"] = g.scores;
        out["converged"] = g.converged;
        out["log_likelihood"] = g.log_likelihood_trace;
        return out;
      },
      py::arg("x"), py::arg("treatment"), py::arg("ridge") = 0.0);

  m.def("analyze", &analyze_arrays, py::arg("x"), py::arg("treatment"), py::arg("y"), py::arg("reference") = "",
        py::arg("estimator") = "bc", py::arg("se") = "new", py::arg("distance") = "vector",
        py::arg("sigma2") = "auto", py::arg("m") = 1, py::arg("J") = 1, py::arg("K") = 5, py::arg("alpha") = 0.05,
        py::arg("eta") = 0.01, py::arg("seed") = 20170101, py::arg("interactions") = false,
        py::arg("pseudo_inverse") = false, py::arg("ridge") = 0.0);

  m.def(
      "analyze_csv",
      [](const std::string& data, const std::string& treatment, const std::string& outcome,
         const std::vector<std::string>& covariates, const std::string& out, const std::string& reference,
         const std::string& estimator, const std::string& se, const std::string& distance) {
        AnalyzeOptions o;
        o.data = data;
        o.treatment = treatment;
        o.outcome = outcome;
        o.covariates = covariates;
        o.out = out;
        o.reference = reference;
        o.estimator = estimator;
        o.se = se;
        o.distance = distance;
        const AnalyzeOutcome r = analyze(o);
        return py::make_tuple(r.exit_code, r.message);
      },
      py::arg("data"), py::arg("treatment"), py::arg("outcome"), py::arg("covariates") = std::vector<std::string>{},
      py::arg("out") = "analysis", py::arg("reference") = "", py::arg("estimator") = "bc", py::arg("se") = "new",
      py::arg("distance") = "vector");

  m.def("match", &match_arrays, py::arg("x"), py::arg("treatment"), py::arg("reference"), py::arg("m") = 1,
        py::arg("J") = 1, py::arg("distance") = "vector", py::arg("K") = 5, py::arg("seed") = 20170101,
        py::arg("ridge") = 0.0);

  m.def(
      "ipw_att",
      [](const MatrixXd& x, const std::vector<std::string>& t, const VectorXd& y, const std::string& reference,
         std::optional<double> cap, double ridge) { return comparator(false, x, t, y, reference, cap, ridge); },
      py::arg("x"), py::arg("treatment"), py::arg("y"), py::arg("reference"), py::arg("weight_cap") = py::none(),
      py::arg("ridge") = 0.0);
  m.def(
      "dr_att",
      [](const MatrixXd& x, const std::vector<std::string>& t, const VectorXd& y, const std::string& reference,
         std::optional<double> cap, double ridge) { return comparator(true, x, t, y, reference, cap, ridge); },
      py::arg("x"), py::arg("treatment"), py::arg("y"), py::arg("reference"), py::arg("weight_cap") = py::none(),
      py::arg("ridge") = 0.0);

  m.def(
      "global_test",
      [](const VectorXd& tau_hat, const MatrixXd& covariance, std::optional<VectorXd> null_tau, double alpha,
         std::optional<std::vector<std::pair<int, int>>> pairs, bool pseudo_inverse) {
        EffectEstimate est;
        est.tau_hat = tau_hat;
        est.covariance = covariance;
        if (pairs) {
          est.pairs = to_pairs(*pairs);
        } else {
          // p = Z(Z-1)/2 pairs in the default order.
          const int z = static_cast<int>(std::lround((1.0 + std::sqrt(1.0 + 8.0 * tau_hat.size())) / 2.0));
          if (z * (z - 1) / 2 != tau_hat.size()) throw ValidationError("length is not Z(Z-1)/2; pass pairs");
          est.pairs = all_pairs(z);
        }
        int z = 0;
        for (const auto& p : est.pairs) z = std::max({z, p.j + 1, p.k + 1});
        std::vector<std::string> labels;
        for (int w = 0; w < z; ++w) labels.push_back(std::to_string(w));
        InferenceOptions io;
        io.pseudo_inverse = pseudo_inverse;
        const VectorXd null = null_tau ? *null_tau : VectorXd::Zero(tau_hat.size());
        return dump(to_json(global_test(est, null, alpha, io), labels));
      },
      py::arg("tau_hat"), py::arg("covariance"), py::arg("null_tau") = py::none(), py::arg("alpha") = 0.05,
      py::arg("pairs") = py::none(), py::arg("pseudo_inverse") = false);

  m.def("default_sim_config", [] { return dump(to_json(SimConfig{})); });

  m.def(
      "simulate_cell",
      [](const std::string& config, int workers) {
        const SimConfig cfg = sim_config_from_json(Json::parse(config));
        RunOptions ro;
        ro.workers = workers;
        SimReport r;
        {
          py::gil_scoped_release release;
          r = run_cell(cfg, ro);
        }
        return dump(to_json(r));
      },
      py::arg("config"), py::arg("workers") = 1);

  m.def(
      "render_tables",
      [](const std::vector<std::string>& reports, int table) {
        std::vector<SimReport> parsed;
        for (const auto& r : reports) parsed.push_back(sim_report_from_json(Json::parse(r)));
        py::list out;
        for (const auto& t : render_tables(parsed, table)) {
          py::dict d;
          d["name"] = t.name;
          d["csv"] = t.csv;
          d["text"] = t.text;
          out.append(d);
        }
        return out;
      },
      py::arg("reports"), py::arg("table") = 0);
}
