#pragma once

#include <cstdint>
#include <vector>

#include "mtmatch/common.hpp"

namespace mtmatch {

struct KMeansOptions {
  int clusters = 5;
  int restarts = 10;
  std::uint64_t seed = 0x6b6d65616e73ULL;
  int max_iterations = 500;
};

struct KMeansResult {
  std::vector<int> assignment;  // cluster of each row
  MatrixXd centers;             // clusters x dims
  double inertia = 0.0;         // within-cluster sum of squares
  int iterations = 0;           // Lloyd iterations of the kept restart
};

// Lloyd's algorithm with k-means++ seeding. Each restart runs until the
// assignment stops changing; the restart with the lowest inertia is kept
// (earliest on ties). Assignment ties go to the lowest cluster index.
// `clusters` is clamped to the number of rows; zero-column input yields a
// single cluster.
KMeansResult lloyd_kmeans(const MatrixXd& points, const KMeansOptions& options);

}  // namespace mtmatch
