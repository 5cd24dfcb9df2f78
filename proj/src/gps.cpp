#include "mtmatch/gps.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mtmatch/format.hpp"

namespace mtmatch {

namespace {

MatrixXd design_with_intercept(const MatrixXd& x) {
  MatrixXd d(x.rows(), x.cols() + 1);
  d.col(0).setOnes();
  d.rightCols(x.cols()) = x;
  return d;
}

// Linear predictors (n x (Z-1)) to probabilities (n x Z), reference last.
MatrixXd softmax_with_reference(const MatrixXd& eta) {
  const Eigen::Index n = eta.rows();
  const Eigen::Index zm1 = eta.cols();
  MatrixXd p(n, zm1 + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    double mx = 0.0;
    for (Eigen::Index c = 0; c < zm1; ++c) mx = std::max(mx, eta(i, c));
    double denom = std::exp(-mx);
    for (Eigen::Index c = 0; c < zm1; ++c) denom += std::exp(eta(i, c) - mx);
    for (Eigen::Index c = 0; c < zm1; ++c) p(i, c) = std::exp(eta(i, c) - mx) / denom;
    p(i, zm1) = std::exp(-mx) / denom;
  }
  return p;
}

double log_likelihood_of(const MatrixXd& eta, const std::vector<int>& w) {
  const Eigen::Index zm1 = eta.cols();
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.rows(); ++i) {
    double mx = 0.0;
    for (Eigen::Index c = 0; c < zm1; ++c) mx = std::max(mx, eta(i, c));
    double s = std::exp(-mx);
    for (Eigen::Index c = 0; c < zm1; ++c) s += std::exp(eta(i, c) - mx);
    const double lse = mx + std::log(s);
    const double own = w[i] < zm1 ? eta(i, w[i]) : 0.0;
    ll += own - lse;
  }
  return ll;
}

double penalty(const MatrixXd& beta, double ridge) {
  if (ridge == 0.0 || beta.cols() < 2) return 0.0;
  return 0.5 * ridge * beta.rightCols(beta.cols() - 1).squaredNorm();
}

}  // namespace

double gps_log_likelihood(const Dataset& ds, const MatrixXd& coefficients) {
  MatrixXd eta = design_with_intercept(ds.covariates()) * coefficients.transpose();
  return log_likelihood_of(eta, ds.treatments());
}

MatrixXd gps_gradient(const Dataset& ds, const MatrixXd& coefficients, double ridge) {
  const MatrixXd d = design_with_intercept(ds.covariates());
  const MatrixXd p = softmax_with_reference(d * coefficients.transpose());
  const Eigen::Index zm1 = coefficients.rows();
  MatrixXd resid(ds.n(), zm1);
  for (int i = 0; i < ds.n(); ++i) {
    for (Eigen::Index c = 0; c < zm1; ++c) resid(i, c) = (ds.treatment(i) == c ? 1.0 : 0.0) - p(i, c);
  }
  MatrixXd g = resid.transpose() * d;
  if (ridge != 0.0 && g.cols() > 1) {
    g.rightCols(g.cols() - 1) -= ridge * coefficients.rightCols(coefficients.cols() - 1);
  }
  return g;
}

GpsModel fit_gps(const Dataset& ds, const GpsOptions& options) {
  const int n = ds.n();
  const int z = ds.num_treatments();
  const int q = ds.num_covariates() + 1;
  if (n <= z * q) {
    throw ValidationError("GPS fit needs n > Z*(P+1) (n=" + std::to_string(n) + ", Z*(P+1)=" +
                          std::to_string(z * q) + ")");
  }
  if (options.ridge < 0.0) throw ValidationError("ridge strength must be non-negative");
  const MatrixXd d = design_with_intercept(ds.covariates());
  const int k = (z - 1) * q;

  MatrixXd beta = MatrixXd::Zero(z - 1, q);
  GpsModel model;
  model.ridge = options.ridge;

  auto objective = [&](const MatrixXd& b) {
    return log_likelihood_of(d * b.transpose(), ds.treatments()) - penalty(b, options.ridge);
  };

  double ll = objective(beta);
  model.log_likelihood_trace.push_back(ll);
  Eigen::LDLT<MatrixXd> info_factor;
  MatrixXd info(k, k);

  for (int iter = 0;; ++iter) {
    const MatrixXd p = softmax_with_reference(d * beta.transpose());
    const MatrixXd g = gps_gradient(ds, beta, options.ridge);
    model.gradient_norm = g.cwiseAbs().maxCoeff();

    // Observed information: sum_i (diag(p_i) - p_i p_i^T) (x) x_i x_i^T.
    for (int c = 0; c < z - 1; ++c) {
      for (int e = c; e < z - 1; ++e) {
        VectorXd wts(n);
        for (int i = 0; i < n; ++i) wts(i) = p(i, c) * ((c == e ? 1.0 : 0.0) - p(i, e));
        MatrixXd block = d.transpose() * (wts.asDiagonal() * d);
        info.block(c * q, e * q, q, q) = block;
        info.block(e * q, c * q, q, q) = block.transpose();
      }
      for (int a = 1; a < q; ++a) info(c * q + a, c * q + a) += options.ridge;
    }
    info_factor.compute(info);
    if (info_factor.info() != Eigen::Success || info_factor.vectorD().minCoeff() <= 0.0) {
      throw NumericalError("GPS information matrix is singular (collinear covariates?)");
    }

    model.iterations = iter;
    if (model.gradient_norm < options.tolerance) {
      model.converged = true;
      break;
    }
    if (iter >= options.max_iterations) break;

    VectorXd gvec(k);
    for (int c = 0; c < z - 1; ++c) gvec.segment(c * q, q) = g.row(c).transpose();
    VectorXd step = info_factor.solve(gvec);
    MatrixXd delta(z - 1, q);
    for (int c = 0; c < z - 1; ++c) delta.row(c) = step.segment(c * q, q).transpose();

    double scale = 1.0;
    MatrixXd trial = beta + delta;
    double ll_trial = objective(trial);
    int halvings = 0;
    const double slack = 1e-12 * (1.0 + std::abs(ll));
    while (!(ll_trial >= ll - slack) && halvings < 50) {
      scale *= 0.5;
      trial = beta + scale * delta;
      ll_trial = objective(trial);
      ++halvings;
    }
    if (!(ll_trial >= ll - slack)) break;  // no ascent direction left; report non-convergence
    beta = trial;
    ll = std::max(ll, ll_trial);
    model.log_likelihood_trace.push_back(ll_trial);

    if (options.ridge == 0.0) {
      const double max_eta = (d * beta.transpose()).cwiseAbs().maxCoeff();
      if (max_eta > options.separation_threshold) {
        throw NumericalError("GPS fit diverging (|linear predictor| = " + format_fixed(max_eta, 1) +
                             "); treatments appear perfectly separated by the covariates; "
                             "use a ridge penalty");
      }
    }
  }

  model.coefficients = beta;
  model.scores = softmax_with_reference(d * beta.transpose());
  model.log_likelihood = gps_log_likelihood(ds, beta);
  MatrixXd cov = info_factor.solve(MatrixXd::Identity(k, k));
  model.standard_errors.resize(z - 1, q);
  for (int c = 0; c < z - 1; ++c) {
    for (int a = 0; a < q; ++a) model.standard_errors(c, a) = std::sqrt(std::max(0.0, cov(c * q + a, c * q + a)));
  }
  return model;
}

MatrixXd predict_scores(const GpsModel& model, const MatrixXd& covariates) {
  if (covariates.cols() + 1 != model.coefficients.cols()) {
    throw ValidationError("covariate count does not match GPS model");
  }
  return softmax_with_reference(design_with_intercept(covariates) * model.coefficients.transpose());
}

MatrixXd clamp_probabilities(const MatrixXd& probabilities) {
  return probabilities.cwiseMax(kProbabilityFloor).cwiseMin(1.0 - kProbabilityFloor);
}

double clamped_logit(double p) {
  p = std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
  return std::log(p / (1.0 - p));
}

MatrixXd logit_scores(const MatrixXd& probabilities) {
  return probabilities.unaryExpr([](double p) { return clamped_logit(p); });
}

MatrixXd logit_scores(const GpsModel& model) { return logit_scores(model.scores); }

OverlapReport overlap_report(const GpsModel& model, double eta) {
  if (!(eta > 0.0 && eta < 0.5)) throw ValidationError("overlap eta must lie in (0, 0.5)");
  OverlapReport r;
  r.eta = eta;
  r.min_score = model.scores.colwise().minCoeff().transpose();
  r.max_score = model.scores.colwise().maxCoeff().transpose();
  for (Eigen::Index i = 0; i < model.scores.rows(); ++i) {
    const auto row = model.scores.row(i);
    if (row.maxCoeff() >= 1.0 - eta || row.minCoeff() <= eta) r.flagged.push_back(static_cast<int>(i));
  }
  return r;
}

void write_coefficients_csv(std::ostream& out, const GpsModel& model, const Dataset& ds) {
  out << "treatment,intercept";
  for (const auto& name : ds.covariate_names()) out << ',' << name;
  out << '\n';
  for (Eigen::Index c = 0; c < model.coefficients.rows(); ++c) {
    out << ds.labels()[c];
    for (Eigen::Index a = 0; a < model.coefficients.cols(); ++a) out << ',' << format_double(model.coefficients(c, a));
    out << '\n';
  }
}

}  // namespace mtmatch
