#include "mtmatch/matching.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <ostream>

#include "mtmatch/format.hpp"
#include "mtmatch/kdtree.hpp"

namespace mtmatch {

double squared_distance(const double* a, const double* b, int dims) {
  double s = 0.0;
  for (int d = 0; d < dims; ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

std::string to_string(DistanceKind kind) {
  switch (kind) {
    case DistanceKind::LogitGpsEuclid: return "logit-gps-euclid";
    case DistanceKind::MahalanobisCovariates: return "mahalanobis-covariates";
    case DistanceKind::EuclidCovariates: return "euclid-covariates";
  }
  return "unknown";
}

DistanceKind parse_distance_kind(const std::string& text) {
  if (text == "logit-gps-euclid" || text == "logit-gps") return DistanceKind::LogitGpsEuclid;
  if (text == "mahalanobis-covariates" || text == "mahalanobis") return DistanceKind::MahalanobisCovariates;
  if (text == "euclid-covariates" || text == "euclid") return DistanceKind::EuclidCovariates;
  throw ValidationError("unknown distance kind '" + text + "'");
}

Metric Metric::from_features(MatrixXd features, std::string description) {
  return Metric(std::move(features), std::move(description));
}

double Metric::squared(int i, int j) const {
  double s = 0.0;
  for (Eigen::Index d = 0; d < features_.cols(); ++d) {
    const double diff = features_(i, d) - features_(j, d);
    s += diff * diff;
  }
  return s;
}

double Metric::distance(int i, int j) const { return std::sqrt(squared(i, j)); }

Metric distance_matrix(const Dataset& ds, const GpsModel* gps, DistanceKind kind) {
  switch (kind) {
    case DistanceKind::LogitGpsEuclid: {
      if (!gps || gps->scores.rows() != ds.n()) throw ValidationError("logit-GPS distance needs a GPS fitted on this dataset");
      return Metric::from_features(logit_scores(*gps), to_string(kind));
    }
    case DistanceKind::EuclidCovariates:
      return Metric::from_features(ds.covariates(), to_string(kind));
    case DistanceKind::MahalanobisCovariates: {
      const MatrixXd& x = ds.covariates();
      if (x.cols() == 0) return Metric::from_features(x, to_string(kind));
      const MatrixXd centered = x.rowwise() - x.colwise().mean();
      const MatrixXd cov = centered.transpose() * centered / std::max(1, ds.n() - 1);
      Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
      const double smallest = eig.eigenvalues().minCoeff();
      if (!(smallest > 1e-12 * std::max(1.0, eig.eigenvalues().maxCoeff()))) {
        throw NumericalError("pooled covariate covariance is singular (smallest eigenvalue " +
                             format_double(smallest) + ")");
      }
      // Whitening: with cov = L L^T, (x_i - x_j)^T cov^{-1} (x_i - x_j) = |L^{-1}(x_i - x_j)|^2.
      Eigen::LLT<MatrixXd> llt(cov);
      MatrixXd white = llt.matrixL().solve(x.transpose()).transpose();
      return Metric::from_features(std::move(white), to_string(kind));
    }
  }
  throw ValidationError("unknown distance kind");
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<Neighbor> scan_nearest(const RowMatrix& f, int query, const std::vector<int>& candidates, int k,
                                   int exclude) {
  std::vector<Neighbor> all;
  all.reserve(candidates.size());
  const int dims = static_cast<int>(f.cols());
  for (int j : candidates) {
    if (j == exclude) continue;
    all.push_back({squared_distance(f.row(query).data(), f.row(j).data(), dims), j});
  }
  const auto take = std::min<std::size_t>(k, all.size());
  std::partial_sort(all.begin(), all.begin() + take, all.end(), neighbor_less);
  all.resize(take);
  return all;
}

MatchResult empty_result(const Dataset& ds, int m, std::optional<int> reference, std::string spec) {
  MatchResult r;
  r.n = ds.n();
  r.num_treatments = ds.num_treatments();
  r.m = m;
  r.reference = reference;
  r.cross_matches.assign(static_cast<std::size_t>(r.n) * r.num_treatments, {});
  r.cross_distances.assign(r.cross_matches.size(), {});
  r.within_matches.assign(r.n, {});
  r.psi = MatrixXi::Zero(r.n, r.num_treatments);
  r.distance_spec = std::move(spec);
  return r;
}

void store(MatchResult& r, int i, int w, const std::vector<Neighbor>& nb) {
  auto& idx = r.cross_matches[static_cast<std::size_t>(i) * r.num_treatments + w];
  auto& dist = r.cross_distances[static_cast<std::size_t>(i) * r.num_treatments + w];
  idx.clear();
  dist.clear();
  for (const auto& x : nb) {
    idx.push_back(x.index);
    dist.push_back(std::sqrt(x.d2));
  }
}

// Under ATT scope nobody is matched into the reference group, so it may be smaller than m.
void check_cross_sizes(const Dataset& ds, int m, std::optional<int> reference) {
  if (m < 1) throw ValidationError("match count m must be at least 1");
  for (int w = 0; w < ds.num_treatments(); ++w) {
    if (reference && w == *reference) continue;
    if (ds.group_size(w) < m) {
      throw ValidationError("treatment '" + ds.labels()[w] + "' has " + std::to_string(ds.group_size(w)) +
                            " units, fewer than m=" + std::to_string(m));
    }
  }
}

}  // namespace

MatrixXi usage_counts(const Dataset& ds, const MatchResult& matches) {
  MatrixXi psi = MatrixXi::Zero(ds.n(), ds.num_treatments());
  for (int j = 0; j < ds.n(); ++j) {
    for (int w = 0; w < ds.num_treatments(); ++w) {
      for (int i : matches.cross(j, w)) psi(i, ds.treatment(j)) += 1;
    }
  }
  return psi;
}

MatchResult knn_match(const Dataset& ds, const Metric& metric, int m, const EstimandSpec& scope,
                      const MatchOptions& options) {
  scope.check(ds.num_treatments());
  if (metric.features().rows() != ds.n()) throw ValidationError("metric does not cover this dataset");
  check_cross_sizes(ds, m, scope.reference);
  MatchResult r = empty_result(ds, m, scope.reference, metric.description());
  const RowMatrix f = metric.features();
  const bool tree = options.use_kdtree && metric.dims() <= 10;

  std::vector<std::unique_ptr<KdTree>> trees(ds.num_treatments());
  if (tree) {
    for (int w = 0; w < ds.num_treatments(); ++w) trees[w] = std::make_unique<KdTree>(metric.features(), ds.group(w));
  }
  for (int i = 0; i < ds.n(); ++i) {
    const int wi = ds.treatment(i);
    if (!r.needs_imputation(i, wi)) continue;
    for (int w = 0; w < ds.num_treatments(); ++w) {
      if (w == wi) continue;
      store(r, i, w, tree ? trees[w]->nearest(i, m, i) : scan_nearest(f, i, ds.group(w), m, i));
    }
  }
  r.psi = usage_counts(ds, r);
  return r;
}

std::uint64_t vector_match_seed(std::uint64_t base, int t, int w) {
  return derive_seed(base, static_cast<std::uint64_t>(t) + 1, static_cast<std::uint64_t>(w) + 1);
}

MatchResult vector_match(const Dataset& ds, const GpsModel& gps, int t, int m, const VectorMatchOptions& options) {
  const int z = ds.num_treatments();
  if (t < 0 || t >= z) throw ValidationError("reference treatment out of range");
  if (options.clusters < 1) throw ValidationError("vector matching needs K >= 1 clusters");
  if (gps.scores.rows() != ds.n() || gps.scores.cols() != z) {
    throw ValidationError("vector matching needs a GPS fitted on this dataset");
  }
  check_cross_sizes(ds, m, t);
  MatchResult r = empty_result(ds, m, t, "vector-matching(K=" + std::to_string(options.clusters) + ")");
  r.strata.assign(z, {});
  const MatrixXd logit = logit_scores(gps);

  for (int w = 0; w < z; ++w) {
    if (w == t) continue;
    std::vector<int> other;
    for (int c = 0; c < z; ++c) {
      if (c != t && c != w) other.push_back(c);
    }
    MatrixXd points(ds.n(), static_cast<Eigen::Index>(other.size()));
    for (std::size_t a = 0; a < other.size(); ++a) points.col(static_cast<Eigen::Index>(a)) = logit.col(other[a]);
    KMeansOptions km;
    km.clusters = options.clusters;
    km.restarts = options.restarts;
    km.seed = vector_match_seed(options.seed, t, w);
    const KMeansResult clusters = lloyd_kmeans(points, km);

    const int k = static_cast<int>(clusters.centers.rows());
    std::vector<std::vector<int>> members(k);
    for (int j : ds.group(w)) members[clusters.assignment[j]].push_back(j);

    for (int i : ds.group(t)) {
      const auto& pool = members[clusters.assignment[i]];
      const auto& candidates = static_cast<int>(pool.size()) >= m ? pool : ds.group(w);
      std::vector<Neighbor> all;
      all.reserve(candidates.size());
      for (int j : candidates) {
        const double diff = logit(i, w) - logit(j, w);
        all.push_back({diff * diff, j});
      }
      std::partial_sort(all.begin(), all.begin() + m, all.end(), neighbor_less);
      all.resize(m);
      store(r, i, w, all);
    }
    r.strata[w] = clusters.assignment;
  }
  r.psi = usage_counts(ds, r);
  return r;
}

MatchResult within_group_match(const Dataset& ds, const GpsModel& gps, int J, const MatchOptions& options) {
  if (J < 1) throw ValidationError("within-group match count J must be at least 1");
  if (gps.scores.rows() != ds.n()) throw ValidationError("within-group matching needs a GPS fitted on this dataset");
  for (int w = 0; w < ds.num_treatments(); ++w) {
    if (ds.group_size(w) < J + 1) {
      throw ValidationError("treatment '" + ds.labels()[w] + "' has " + std::to_string(ds.group_size(w)) +
                            " units, fewer than J+1=" + std::to_string(J + 1));
    }
  }
  MatchResult r = empty_result(ds, 0, std::nullopt, "within:logit-gps-euclid");
  r.J = J;
  const MatrixXd logit = logit_scores(gps);
  const RowMatrix f = logit;
  const bool tree = options.use_kdtree && logit.cols() <= 10;
  for (int w = 0; w < ds.num_treatments(); ++w) {
    std::unique_ptr<KdTree> index;
    if (tree) index = std::make_unique<KdTree>(logit, ds.group(w));
    for (int i : ds.group(w)) {
      auto nb = tree ? index->nearest(i, J, i) : scan_nearest(f, i, ds.group(w), J, i);
      auto& out = r.within_matches[i];
      for (const auto& x : nb) out.push_back(x.index);
    }
  }
  return r;
}

MatchResult with_within(MatchResult cross, const MatchResult& within) {
  if (within.n != cross.n) throw ValidationError("within-group matches cover a different dataset");
  cross.within_matches = within.within_matches;
  cross.J = within.J;
  return cross;
}

void write_matches_csv(std::ostream& out, const Dataset& ds, const MatchResult& matches) {
  out << "unit,treatment,target,rank,match,distance\n";
  for (int i = 0; i < ds.n(); ++i) {
    for (int w = 0; w < ds.num_treatments(); ++w) {
      const auto& idx = matches.cross(i, w);
      const auto& dist = matches.cross_distances[static_cast<std::size_t>(i) * matches.num_treatments + w];
      for (std::size_t a = 0; a < idx.size(); ++a) {
        out << i << ',' << ds.labels()[ds.treatment(i)] << ',' << ds.labels()[w] << ',' << a + 1 << ',' << idx[a]
            << ',' << format_double(dist[a]) << '\n';
      }
    }
  }
}

}  // namespace mtmatch
