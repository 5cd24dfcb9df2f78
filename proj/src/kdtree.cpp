#include "mtmatch/kdtree.hpp"

#include <algorithm>

#include "mtmatch/matching.hpp"

namespace mtmatch {

KdTree::KdTree(const MatrixXd& features, std::vector<int> members, int leaf_size)
    : points_(features), members_(std::move(members)), dims_(static_cast<int>(features.cols())), leaf_size_(std::max(1, leaf_size)) {
  if (!members_.empty()) {
    nodes_.reserve(2 * members_.size() / leaf_size_ + 2);
    build(0, static_cast<int>(members_.size()), 0);
  }
}

int KdTree::build(int begin, int end, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end, -1, 0.0, -1, -1});
  if (end - begin <= leaf_size_ || dims_ == 0) return id;

  int best_dim = 0;
  double best_spread = -1.0;
  for (int d = 0; d < dims_; ++d) {
    double lo = points_(members_[begin], d), hi = lo;
    for (int a = begin + 1; a < end; ++a) {
      lo = std::min(lo, points_(members_[a], d));
      hi = std::max(hi, points_(members_[a], d));
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      best_dim = d;
    }
  }
  if (best_spread <= 0.0) return id;  // all points coincide

  const int mid = begin + (end - begin) / 2;
  std::nth_element(members_.begin() + begin, members_.begin() + mid, members_.begin() + end,
                   [&](int a, int b) { return points_(a, best_dim) < points_(b, best_dim); });
  const double split = points_(members_[mid], best_dim);
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid, end, depth + 1);
  nodes_[id].dim = best_dim;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(int node_id, const double* q, int k, int exclude, std::vector<Neighbor>& heap) const {
  const Node& node = nodes_[node_id];
  if (node.dim < 0) {
    for (int a = node.begin; a < node.end; ++a) {
      const int idx = members_[a];
      if (idx == exclude) continue;
      Neighbor cand{squared_distance(q, points_.row(idx).data(), dims_), idx};
      if (static_cast<int>(heap.size()) < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end(), neighbor_less);
      } else if (neighbor_less(cand, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), neighbor_less);
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end(), neighbor_less);
      }
    }
    return;
  }
  const double diff = q[node.dim] - node.split;
  const int near = diff < 0.0 ? node.left : node.right;
  const int far = diff < 0.0 ? node.right : node.left;
  search(near, q, k, exclude, heap);
  // Equal bounds are still visited so that lower-index ties are found.
  if (static_cast<int>(heap.size()) < k || diff * diff <= heap.front().d2) search(far, q, k, exclude, heap);
}

std::vector<Neighbor> KdTree::nearest(const VectorXd& point, int k, int exclude) const {
  std::vector<Neighbor> heap;
  if (nodes_.empty() || k <= 0) return heap;
  heap.reserve(k + 1);
  search(0, point.data(), k, exclude, heap);
  std::sort_heap(heap.begin(), heap.end(), neighbor_less);
  return heap;
}

std::vector<Neighbor> KdTree::nearest(int query, int k, int exclude) const {
  VectorXd q = points_.row(query).transpose();
  return nearest(q, k, exclude);
}

}  // namespace mtmatch
