#include "mtmatch/comparators.hpp"

#include <algorithm>
#include <cmath>

namespace mtmatch {

std::string to_string(ComparatorKind kind) { return kind == ComparatorKind::Ipw ? "ipw" : "dr"; }

VectorXd comparator_weights(const Dataset& ds, const MatrixXd& scores, int t, const ComparatorOptions& options) {
  const int z = ds.num_treatments();
  if (t < 0 || t >= z) throw ValidationError("reference treatment out of range");
  if (scores.rows() != ds.n() || scores.cols() != z) throw ValidationError("score matrix does not match the dataset");
  if (options.weight_cap && !(*options.weight_cap > 0.0)) throw ValidationError("weight cap must be positive");
  const MatrixXd r = clamp_probabilities(scores);
  VectorXd u(ds.n());
  for (int i = 0; i < ds.n(); ++i) {
    const int w = ds.treatment(i);
    u(i) = w == t ? 1.0 : r(i, t) / r(i, w);
    if (options.weight_cap) u(i) = std::min(u(i), *options.weight_cap);
  }
  return u;
}

namespace {

// Shared by both comparators; IPW is the DR form with mu = 0. Group-t units
// enter through a_w(i) = mu_w(X_i) for w != t and a_t(i) = Y_i, other groups
// through their weighted residuals.
ComparatorEstimate augmented(ComparatorKind kind, const Dataset& ds, const MatrixXd& scores, const MatrixXd& mu, int t,
                             const std::vector<Pair>& pairs_in, const ComparatorOptions& options) {
  const int z = ds.num_treatments();
  const VectorXd u = comparator_weights(ds, scores, t, options);
  if (mu.rows() != ds.n() || mu.cols() != z) throw ValidationError("outcome predictions do not match the dataset");
  const auto pairs = pairs_in.empty() ? all_pairs(z) : pairs_in;
  EstimandSpec{t, pairs}.check(z);

  ComparatorEstimate out;
  out.method = kind;
  out.reference = t;
  out.pairs = pairs;
  out.weight_cap = options.weight_cap;
  out.mu = VectorXd::Zero(z);
  out.max_weight = VectorXd::Zero(z);
  out.effective_size = VectorXd::Zero(z);

  const auto& y = ds.outcomes();
  const double nt = ds.group_size(t);
  // contrib(i, w): linearized contribution of unit i to the estimate for treatment w.
  MatrixXd contrib = MatrixXd::Zero(ds.n(), z);
  for (int w = 0; w < z; ++w) {
    double a_mean = 0.0;
    for (int i : ds.group(t)) a_mean += w == t ? y(i) : mu(i, w);
    a_mean /= nt;
    for (int i : ds.group(t)) contrib(i, w) = ((w == t ? y(i) : mu(i, w)) - a_mean) / nt;
    if (w == t) {
      out.mu(w) = a_mean;
      out.max_weight(w) = 1.0;
      out.effective_size(w) = nt;
      continue;
    }
    double su = 0.0, su2 = 0.0, sue = 0.0, umax = 0.0;
    for (int i : ds.group(w)) {
      su += u(i);
      su2 += u(i) * u(i);
      sue += u(i) * (y(i) - mu(i, w));
      umax = std::max(umax, u(i));
    }
    if (!(su > 0.0)) throw NumericalError("zero weight sum in treatment group " + std::to_string(w));
    const double ebar = sue / su;
    for (int i : ds.group(w)) contrib(i, w) = u(i) * (y(i) - mu(i, w) - ebar) / su;
    out.mu(w) = a_mean + ebar;
    out.max_weight(w) = umax;
    out.effective_size(w) = su * su / su2;
  }

  const auto p = static_cast<Eigen::Index>(pairs.size());
  MatrixXd c(ds.n(), p);
  out.tau_hat.resize(p);
  for (Eigen::Index q = 0; q < p; ++q) {
    c.col(q) = contrib.col(pairs[q].j) - contrib.col(pairs[q].k);
    out.tau_hat(q) = out.mu(pairs[q].j) - out.mu(pairs[q].k);
  }
  out.covariance = c.transpose() * c;
  out.se = out.covariance.diagonal().cwiseSqrt();
  return out;
}

}  // namespace

ComparatorEstimate ipw_att(const Dataset& ds, const MatrixXd& scores, int t, const std::vector<Pair>& pairs,
                           const ComparatorOptions& options) {
  return augmented(ComparatorKind::Ipw, ds, scores, MatrixXd::Zero(ds.n(), ds.num_treatments()), t, pairs, options);
}

ComparatorEstimate ipw_att(const Dataset& ds, const GpsModel& gps, int t, const std::vector<Pair>& pairs,
                           const ComparatorOptions& options) {
  return ipw_att(ds, gps.scores, t, pairs, options);
}

ComparatorEstimate dr_att(const Dataset& ds, const MatrixXd& scores, const MatrixXd& mu, int t,
                          const std::vector<Pair>& pairs, const ComparatorOptions& options) {
  return augmented(ComparatorKind::Dr, ds, scores, mu, t, pairs, options);
}

ComparatorEstimate dr_att(const Dataset& ds, const GpsModel& gps, const GroupRegression& regs, int t,
                          const std::vector<Pair>& pairs, const ComparatorOptions& options) {
  return dr_att(ds, gps.scores, regs.predict_all(ds.covariates()), t, pairs, options);
}

}  // namespace mtmatch
