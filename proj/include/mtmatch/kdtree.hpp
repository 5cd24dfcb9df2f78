#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "mtmatch/common.hpp"

namespace mtmatch {

// One neighbour: squared distance and unit index.
struct Neighbor {
  double d2 = 0.0;
  int index = 0;
};

inline bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  return a.d2 < b.d2 || (a.d2 == b.d2 && a.index < b.index);
}

/// Exact k-nearest-neighbour index over a subset of rows of a feature matrix.
///
/// Results are ordered by (squared distance, index), so ties resolve to the
/// lowest index exactly as an exhaustive scan would.
class KdTree {
 public:
  KdTree(const MatrixXd& features, std::vector<int> members, int leaf_size = 8);

  // k nearest members to row `query` of the same feature matrix, skipping `exclude`.
  std::vector<Neighbor> nearest(int query, int k, int exclude = -1) const;
  std::vector<Neighbor> nearest(const VectorXd& point, int k, int exclude = -1) const;

 private:
  struct Node {
    int begin = 0, end = 0;  // range into members_
    int dim = -1;            // -1 for leaves
    double split = 0.0;
    int left = -1, right = -1;
  };

  int build(int begin, int end, int depth);
  void search(int node, const double* q, int k, int exclude, std::vector<Neighbor>& heap) const;

  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> points_;
  std::vector<int> members_;
  std::vector<Node> nodes_;
  int dims_ = 0;
  int leaf_size_ = 8;
};

}  // namespace mtmatch
