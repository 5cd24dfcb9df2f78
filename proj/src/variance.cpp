#include "mtmatch/variance.hpp"

#include <cmath>

namespace mtmatch {

std::string to_string(Sigma2Method method) {
  return method == Sigma2Method::RawMatch ? "raw_match" : "residual_corrected";
}

namespace {

ConditionalVariances local_variance(const Dataset& ds, const MatchResult& matches, const VectorXd& values,
                                    Sigma2Method method) {
  if (matches.J < 1 || static_cast<int>(matches.within_matches.size()) != ds.n()) {
    throw ValidationError("conditional variances need within-group matches");
  }
  ConditionalVariances out;
  out.method = method;
  out.J = matches.J;
  out.sigma2.resize(ds.n());
  const double J = matches.J;
  for (int i = 0; i < ds.n(); ++i) {
    const auto& set = matches.within(i);
    if (static_cast<int>(set.size()) != matches.J) {
      throw ValidationError("missing within-group match set for unit " + std::to_string(i));
    }
    double mean = 0.0;
    for (int l : set) mean += values(l);
    mean /= J;
    const double d = values(i) - mean;
    out.sigma2(i) = J / (J + 1.0) * d * d;
  }
  return out;
}

}  // namespace

ConditionalVariances sigma2_raw(const Dataset& ds, const MatchResult& matches) {
  return local_variance(ds, matches, ds.outcomes(), Sigma2Method::RawMatch);
}

ConditionalVariances sigma2_residual(const Dataset& ds, const MatchResult& matches, const GroupRegression& regs) {
  if (static_cast<int>(regs.beta.size()) != ds.num_treatments()) {
    throw ValidationError("outcome regressions do not match the dataset");
  }
  const MatrixXd mu = regs.predict_all(ds.covariates());
  VectorXd resid(ds.n());
  for (int i = 0; i < ds.n(); ++i) resid(i) = ds.outcomes()(i) - mu(i, ds.treatment(i));
  return local_variance(ds, matches, resid, Sigma2Method::ResidualCorrected);
}

VectorXd var_ybar(const Dataset& ds, const ImputedOutcomes& imputed, const MatchResult& matches,
                  const ConditionalVariances& sig, int t) {
  const int z = ds.num_treatments();
  if (t < 0 || t >= z) throw ValidationError("reference treatment out of range");
  if (imputed.yhat.rows() != ds.n() || imputed.yhat.cols() != z || sig.sigma2.size() != ds.n() ||
      matches.psi.rows() != ds.n()) {
    throw ValidationError("variance inputs cover different datasets");
  }
  if (matches.reference && *matches.reference != t) {
    throw ValidationError("match result was built for a different reference treatment");
  }
  const double nt = ds.group_size(t);
  const double m2 = static_cast<double>(matches.m) * matches.m;
  VectorXd out(z);
  for (int w = 0; w < z; ++w) {
    double mean = 0.0;
    for (int i : ds.group(t)) mean += imputed.yhat(i, w);
    mean /= nt;
    double spread = 0.0;
    for (int i : ds.group(t)) {
      const double d = imputed.yhat(i, w) - mean;
      spread += d * d;
    }
    double reuse = 0.0;
    for (int i : ds.group(w)) {
      const double psi = matches.psi(i, t);
      reuse += psi * (psi - 1.0) / m2 * sig.sigma2(i);
    }
    out(w) = (spread + reuse) / (nt * nt);
  }
  return out;
}

MatrixXd contrast_matrix(int num_treatments, const std::vector<Pair>& pairs) {
  MatrixXd a = MatrixXd::Zero(static_cast<Eigen::Index>(pairs.size()), num_treatments);
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    a(static_cast<Eigen::Index>(q), pairs[q].j) += 1.0;
    a(static_cast<Eigen::Index>(q), pairs[q].k) -= 1.0;
  }
  return a;
}

CovarianceMatrix assemble_covariance(const VectorXd& var_ybar, const std::vector<Pair>& pairs) {
  for (Eigen::Index w = 0; w < var_ybar.size(); ++w) {
    if (!(var_ybar(w) >= 0.0)) throw ValidationError("negative variance entry for treatment " + std::to_string(w));
  }
  const MatrixXd a = contrast_matrix(static_cast<int>(var_ybar.size()), pairs);
  CovarianceMatrix c;
  c.var_ybar = var_ybar;
  c.cov_tau = a * var_ybar.asDiagonal() * a.transpose();
  return c;
}

CovarianceMatrix assemble_covariance(const VectorXd& var_ybar, int num_treatments) {
  if (var_ybar.size() != num_treatments) throw ValidationError("variance vector length differs from Z");
  return assemble_covariance(var_ybar, all_pairs(num_treatments));
}

MatrixXd randomization_covariance(const Dataset& ds, const ImputedOutcomes& imputed, int t,
                                  const std::vector<Pair>& pairs_in) {
  if (t < 0 || t >= ds.num_treatments()) throw ValidationError("reference treatment out of range");
  const int nt = ds.group_size(t);
  if (nt < 2) throw ValidationError("randomization-based SE needs at least 2 reference units");
  const auto pairs = pairs_in.empty() ? all_pairs(ds.num_treatments()) : pairs_in;
  const auto p = static_cast<Eigen::Index>(pairs.size());
  MatrixXd d(nt, p);
  for (int r = 0; r < nt; ++r) {
    const int i = ds.group(t)[r];
    for (Eigen::Index q = 0; q < p; ++q) d(r, q) = imputed.yhat(i, pairs[q].j) - imputed.yhat(i, pairs[q].k);
  }
  const MatrixXd centered = d.rowwise() - d.colwise().mean();
  return centered.transpose() * centered / (static_cast<double>(nt - 1) * nt);
}

void attach_new_covariance(EffectEstimate& est, const Dataset& ds, const ImputedOutcomes& imputed,
                           const MatchResult& matches, const ConditionalVariances& sig) {
  if (!est.reference) throw ValidationError("covariance is only available for a single reference group");
  const VectorXd v = var_ybar(ds, imputed, matches, sig, *est.reference);
  est.covariance = assemble_covariance(v, est.pairs).cov_tau;
  est.se = SeMethod::NewlyProposed;
  est.J = sig.J;
}

void attach_randomization_covariance(EffectEstimate& est, const Dataset& ds, const ImputedOutcomes& imputed) {
  if (!est.reference) throw ValidationError("covariance is only available for a single reference group");
  est.covariance = randomization_covariance(ds, imputed, *est.reference, est.pairs);
  est.se = SeMethod::Randomization;
}

}  // namespace mtmatch
