#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <queue>
#include <utility>
#include <vector>

#include "gnnmp/env.hpp"

namespace gnnmp {

/// Neighbor ordering used everywhere: squared distance, then index.
struct Neighbor {
  double dist2;
  std::size_t index;
  bool operator<(const Neighbor& o) const { return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index); }
};

/// Exact k nearest neighbors by exhaustive scan, excluding `self`.
inline std::vector<std::size_t> knn_brute_force(const std::vector<Config>& points, const std::vector<std::size_t>& candidates,
                                                const Config& query, std::size_t self, std::size_t k) {
  std::vector<Neighbor> all;
  all.reserve(candidates.size());
  for (std::size_t c : candidates) {
    if (c == self) continue;
    all.push_back({squared_distance(points[c], query), c});
  }
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = all[i].index;
  return out;
}

/// Static kd-tree over a subset of points; answers exact k-NN queries with the same tie order as the brute force.
class KdTree {
 public:
  KdTree(const std::vector<Config>& points, std::vector<std::size_t> subset) : points_(points), ids_(std::move(subset)) {
    if (!ids_.empty()) dim_ = points_[ids_.front()].size();
    nodes_.reserve(ids_.size());
    if (!ids_.empty()) root_ = build(0, ids_.size(), 0);
  }

  std::vector<std::size_t> knn(const Config& query, std::size_t self, std::size_t k) const {
    std::priority_queue<Neighbor> heap;
    if (root_ >= 0 && k > 0) search(root_, query, self, k, heap);
    std::vector<std::size_t> out(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = heap.top().index;
      heap.pop();
    }
    return out;
  }

 private:
  struct Node {
    std::size_t point;
    std::size_t axis;
    int left = -1;
    int right = -1;
  };

  int build(std::size_t lo, std::size_t hi, std::size_t depth) {
    if (lo >= hi) return -1;
    const std::size_t axis = depth % dim_;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(ids_.begin() + static_cast<std::ptrdiff_t>(lo), ids_.begin() + static_cast<std::ptrdiff_t>(mid),
                     ids_.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::size_t a, std::size_t b) {
                       const double pa = points_[a][axis];
                       const double pb = points_[b][axis];
                       return pa < pb || (pa == pb && a < b);
                     });
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({ids_[mid], axis});
    const int l = build(lo, mid, depth + 1);
    const int r = build(mid + 1, hi, depth + 1);
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  void search(int node_id, const Config& q, std::size_t self, std::size_t k, std::priority_queue<Neighbor>& heap) const {
    const Node& node = nodes_[static_cast<std::size_t>(node_id)];
    if (node.point != self) {
      Neighbor cand{squared_distance(points_[node.point], q), node.point};
      if (heap.size() < k) {
        heap.push(cand);
      } else if (cand < heap.top()) {
        heap.pop();
        heap.push(cand);
      }
    }
    const double diff = q[node.axis] - points_[node.point][node.axis];
    const int near = diff < 0.0 ? node.left : node.right;
    const int far = diff < 0.0 ? node.right : node.left;
    if (near >= 0) search(near, q, self, k, heap);
    if (far >= 0 && (heap.size() < k || diff * diff <= heap.top().dist2)) search(far, q, self, k, heap);
  }

  const std::vector<Config>& points_;
  std::vector<std::size_t> ids_;
  std::vector<Node> nodes_;
  std::size_t dim_ = 0;
  int root_ = -1;
};

/// Rows of k-NN lists for every query in `queries`, searched among `candidates`.
/// Brute force under the threshold, kd-tree above it.
inline std::vector<std::vector<std::size_t>> knn_lists(const std::vector<Config>& points,
                                                       const std::vector<std::size_t>& candidates,
                                                       const std::vector<std::size_t>& queries, std::size_t k,
                                                       std::size_t kd_threshold = 2000) {
  std::vector<std::vector<std::size_t>> out(queries.size());
  if (candidates.size() < kd_threshold) {
    for (std::size_t i = 0; i < queries.size(); ++i)
      out[i] = knn_brute_force(points, candidates, points[queries[i]], queries[i], k);
  } else {
    KdTree tree(points, candidates);
    for (std::size_t i = 0; i < queries.size(); ++i) out[i] = tree.knn(points[queries[i]], queries[i], k);
  }
  return out;
}

}  // namespace gnnmp
