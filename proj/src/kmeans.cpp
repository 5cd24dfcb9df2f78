#include "mtmatch/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <random>

namespace mtmatch {

namespace {

int nearest_center(const MatrixXd& points, Eigen::Index i, const MatrixXd& centers, double* best_d2) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    double d2 = (points.row(i) - centers.row(c)).squaredNorm();
    if (d2 < best_d) {
      best_d = d2;
      best = static_cast<int>(c);
    }
  }
  if (best_d2) *best_d2 = best_d;
  return best;
}

MatrixXd plus_plus_centers(const MatrixXd& points, int k, std::mt19937_64& rng) {
  const Eigen::Index n = points.rows();
  MatrixXd centers(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = points.row(pick(rng));
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (points.row(i) - centers.row(c - 1)).squaredNorm());
      total += d2[i];
    }
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      double target = unif(rng) * total;
      double acc = 0.0;
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= target && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    centers.row(c) = points.row(chosen);
  }
  return centers;
}

KMeansResult run_once(const MatrixXd& points, int k, int max_iterations, std::mt19937_64& rng) {
  const Eigen::Index n = points.rows();
  KMeansResult r;
  r.centers = plus_plus_centers(points, k, rng);
  r.assignment.assign(n, -1);
  for (int iter = 1; iter <= max_iterations; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int c = nearest_center(points, i, r.centers, nullptr);
      if (c != r.assignment[i]) {
        r.assignment[i] = c;
        changed = true;
      }
    }
    r.iterations = iter;
    if (!changed) break;
    MatrixXd sums = MatrixXd::Zero(k, points.cols());
    std::vector<int> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(r.assignment[i]) += points.row(i);
      ++counts[r.assignment[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) r.centers.row(c) = sums.row(c) / counts[c];  // empty: keep old center
    }
  }
  r.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) r.inertia += (points.row(i) - r.centers.row(r.assignment[i])).squaredNorm();
  return r;
}

}  // namespace

KMeansResult lloyd_kmeans(const MatrixXd& points, const KMeansOptions& options) {
  if (options.clusters < 1) throw ValidationError("k-means needs at least one cluster");
  if (options.restarts < 1) throw ValidationError("k-means needs at least one restart");
  const Eigen::Index n = points.rows();
  if (n == 0) throw ValidationError("k-means on an empty point set");
  if (points.cols() == 0 || options.clusters == 1) {
    KMeansResult r;
    r.assignment.assign(n, 0);
    r.centers = points.colwise().mean();
    r.inertia = (points.rowwise() - r.centers.row(0)).squaredNorm();
    return r;
  }
  const int k = static_cast<int>(std::min<Eigen::Index>(options.clusters, n));
  std::mt19937_64 rng(options.seed);
  KMeansResult best;
  for (int rep = 0; rep < options.restarts; ++rep) {
    KMeansResult r = run_once(points, k, options.max_iterations, rng);
    if (rep == 0 || r.inertia < best.inertia) best = std::move(r);
  }
  return best;
}

}  // namespace mtmatch
