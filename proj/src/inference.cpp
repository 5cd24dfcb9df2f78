#include "mtmatch/inference.hpp"

#include <algorithm>
#include <cmath>

#include "mtmatch/distributions.hpp"
#include "mtmatch/format.hpp"
#include "mtmatch/variance.hpp"

namespace mtmatch {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
}

const MatrixXd& checked_covariance(const EffectEstimate& est) {
  if (!est.covariance) throw ValidationError("estimate carries no covariance matrix");
  const auto p = static_cast<Eigen::Index>(est.pairs.size());
  if (est.covariance->rows() != p || est.covariance->cols() != p || est.tau_hat.size() != p) {
    throw ValidationError("estimate covariance dimension does not match its pairs");
  }
  return *est.covariance;
}

}  // namespace

double quadratic_form(const MatrixXd& covariance, const VectorXd& d, const InferenceOptions& options, int* rank,
                      int structural_rank) {
  if (covariance.rows() != d.size() || covariance.cols() != d.size()) {
    throw ValidationError("quadratic form dimension mismatch");
  }
  const auto p = static_cast<int>(d.size());
  const int expected = structural_rank < 0 ? p : std::min(structural_rank, p);
  const MatrixXd sym = 0.5 * (covariance + covariance.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
  const VectorXd& ev = eig.eigenvalues();
  const double scale = p > 0 ? ev.cwiseAbs().maxCoeff() : 0.0;
  const double tol = 1e-12 * std::max(scale, 1e-300) * std::max(p, 1);
  int r = 0;
  for (Eigen::Index a = 0; a < ev.size(); ++a) r += ev(a) > tol ? 1 : 0;
  if (r == p) {
    Eigen::LLT<MatrixXd> llt(sym);
    if (llt.info() == Eigen::Success) {
      if (rank) *rank = p;
      return d.dot(llt.solve(d));
    }
  }
  if (r < expected && !options.pseudo_inverse) {
    throw NumericalError("covariance matrix is singular (smallest eigenvalue " + format_double(ev.minCoeff()) + ")");
  }
  // Pseudo-inverse over the eigenvalues above tolerance. The part of d in the
  // null space must vanish, otherwise the statistic would silently drop it.
  const VectorXd proj = eig.eigenvectors().transpose() * d;
  double q = 0.0, outside = 0.0;
  for (Eigen::Index a = 0; a < ev.size(); ++a) {
    if (ev(a) > tol) {
      q += proj(a) * proj(a) / ev(a);
    } else {
      outside += proj(a) * proj(a);
    }
  }
  if (!options.pseudo_inverse && std::sqrt(outside) > 1e-8 * std::max(1.0, d.norm())) {
    throw ValidationError("contrast vector is inconsistent with the pair structure (tau_jk + tau_kl must equal tau_jl)");
  }
  if (rank) *rank = r;
  return q;
}

int structural_rank(const std::vector<Pair>& pairs) {
  if (pairs.empty()) return 0;
  int z = 0;
  for (const auto& pr : pairs) z = std::max({z, pr.j + 1, pr.k + 1});
  return static_cast<int>(Eigen::FullPivLU<MatrixXd>(contrast_matrix(z, pairs)).rank());
}

InferenceReport global_test(const EffectEstimate& est, const VectorXd& null_tau, double alpha,
                            const InferenceOptions& options) {
  check_alpha(alpha);
  const MatrixXd& cov = checked_covariance(est);
  if (null_tau.size() != est.tau_hat.size()) throw ValidationError("null vector length differs from the estimate");
  InferenceReport r;
  r.alpha = alpha;
  int rank = 0;
  const int srank = structural_rank(est.pairs);
  r.z2 = quadratic_form(cov, est.tau_hat - null_tau, options, &rank, srank);
  r.df = rank;
  r.pseudo_inverse_used = rank < srank;
  r.p_value = r.df > 0 ? std::clamp(chi2_sf(r.z2, r.df), 0.0, 1.0) : 1.0;
  r.region_radius2 = r.df > 0 ? chi2_quantile(1.0 - alpha, r.df) : 0.0;
  r.pair_intervals = bonferroni_intervals(est, alpha);
  r.uncorrected_bias_caveat = est.estimator == EstimatorKind::Basic;
  r.se_method = to_string(est.se);
  return r;
}

bool region_covers(const EffectEstimate& est, const VectorXd& true_tau, double alpha, const InferenceOptions& options) {
  check_alpha(alpha);
  const MatrixXd& cov = checked_covariance(est);
  if (true_tau.size() != est.tau_hat.size()) throw ValidationError("true vector length differs from the estimate");
  int rank = 0;
  const double z2 = quadratic_form(cov, est.tau_hat - true_tau, options, &rank, structural_rank(est.pairs));
  return rank == 0 || z2 <= chi2_quantile(1.0 - alpha, rank);
}

double bonferroni_quantile(double alpha, int p) {
  check_alpha(alpha);
  if (p < 1) throw ValidationError("Bonferroni adjustment needs at least one pair");
  return normal_quantile(1.0 - alpha / (2.0 * p));
}

std::vector<PairInterval> bonferroni_intervals(const EffectEstimate& est, double alpha) {
  const MatrixXd& cov = checked_covariance(est);
  const int p = static_cast<int>(est.pairs.size());
  const double z = bonferroni_quantile(alpha, p);
  std::vector<PairInterval> out;
  for (int q = 0; q < p; ++q) {
    const double v = cov(q, q);
    if (v < 0.0) throw ValidationError("negative variance on the covariance diagonal");
    const double half = z * std::sqrt(v);
    out.push_back({est.pairs[q], est.tau_hat(q), est.tau_hat(q) - half, est.tau_hat(q) + half, alpha / p});
  }
  return out;
}

}  // namespace mtmatch
