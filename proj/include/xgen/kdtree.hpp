#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <queue>
#include <vector>

#include "xgen/util.hpp"

namespace xgen {

// Median-split kd-tree over 3D points. Supports exact nearest neighbor under
// L2 or L1 and k-nearest under L2. Indices refer to the input point array.
class KdTree3 {
 public:
  explicit KdTree3(const std::vector<Eigen::Vector3d>& pts) : pts_(pts) {
    if (pts_.empty()) throw Error("KdTree3: empty point set");
    order_.resize(pts_.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(2 * pts_.size());
    root_ = build(0, pts_.size());
  }

  struct Hit {
    int index = -1;
    double distance = 0.0;  // in the query metric
  };

  Hit nearest_l2(const Eigen::Vector3d& q) const { return nearest<false>(q); }
  Hit nearest_l1(const Eigen::Vector3d& q) const { return nearest<true>(q); }

  // k nearest under L2, sorted by increasing distance.
  std::vector<int> knn(const Eigen::Vector3d& q, int k) const {
    std::priority_queue<std::pair<double, int>> heap;  // max-heap on distance^2
    knn_rec(root_, q, k, heap);
    std::vector<std::pair<double, int>> tmp;
    tmp.reserve(heap.size());
    while (!heap.empty()) {
      tmp.push_back(heap.top());
      heap.pop();
    }
    std::sort(tmp.begin(), tmp.end());
    std::vector<int> out;
    out.reserve(tmp.size());
    for (auto& [d, i] : tmp) out.push_back(i);
    return out;
  }

 private:
  struct Node {
    Eigen::Vector3d lo, hi;  // bounding box
    int left = -1, right = -1;
    uint32_t begin = 0, end = 0;  // leaf range into order_
  };

  static constexpr size_t kLeafSize = 16;

  int build(size_t begin, size_t end) {
    Node node;
    node.lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    node.hi = -node.lo;
    for (size_t i = begin; i < end; ++i) {
      node.lo = node.lo.cwiseMin(pts_[order_[i]]);
      node.hi = node.hi.cwiseMax(pts_[order_[i]]);
    }
    if (end - begin <= kLeafSize) {
      node.begin = uint32_t(begin);
      node.end = uint32_t(end);
      nodes_.push_back(node);
      return int(nodes_.size()) - 1;
    }
    int axis = 0;
    Eigen::Vector3d ext = node.hi - node.lo;
    if (ext[1] > ext[axis]) axis = 1;
    if (ext[2] > ext[axis]) axis = 2;
    size_t mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return pts_[a][axis] < pts_[b][axis]; });
    int self = int(nodes_.size());
    nodes_.push_back(node);
    int l = build(begin, mid);
    int r = build(mid, end);
    nodes_[self].left = l;
    nodes_[self].right = r;
    return self;
  }

  template <bool L1>
  static double point_dist(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    if constexpr (L1)
      return (a - b).cwiseAbs().sum();
    else
      return (a - b).norm();
  }

  template <bool L1>
  double box_dist(const Node& n, const Eigen::Vector3d& q) const {
    Eigen::Vector3d d = (n.lo - q).cwiseMax(q - n.hi).cwiseMax(0.0);
    if constexpr (L1)
      return d.sum();
    else
      return d.norm();
  }

  template <bool L1>
  Hit nearest(const Eigen::Vector3d& q) const {
    Hit best;
    best.distance = std::numeric_limits<double>::infinity();
    nearest_rec<L1>(root_, q, best);
    return best;
  }

  template <bool L1>
  void nearest_rec(int ni, const Eigen::Vector3d& q, Hit& best) const {
    const Node& n = nodes_[ni];
    if (box_dist<L1>(n, q) >= best.distance) return;
    if (n.left < 0) {
      for (uint32_t i = n.begin; i < n.end; ++i) {
        double d = point_dist<L1>(pts_[order_[i]], q);
        if (d < best.distance) {
          best.distance = d;
          best.index = order_[i];
        }
      }
      return;
    }
    double dl = box_dist<L1>(nodes_[n.left], q);
    double dr = box_dist<L1>(nodes_[n.right], q);
    if (dl < dr) {
      nearest_rec<L1>(n.left, q, best);
      nearest_rec<L1>(n.right, q, best);
    } else {
      nearest_rec<L1>(n.right, q, best);
      nearest_rec<L1>(n.left, q, best);
    }
  }

  void knn_rec(int ni, const Eigen::Vector3d& q, int k,
               std::priority_queue<std::pair<double, int>>& heap) const {
    const Node& n = nodes_[ni];
    double bd = box_dist<false>(n, q);
    if (int(heap.size()) >= k && bd * bd >= heap.top().first) return;
    if (n.left < 0) {
      for (uint32_t i = n.begin; i < n.end; ++i) {
        double d2 = (pts_[order_[i]] - q).squaredNorm();
        if (int(heap.size()) < k)
          heap.emplace(d2, order_[i]);
        else if (d2 < heap.top().first) {
          heap.pop();
          heap.emplace(d2, order_[i]);
        }
      }
      return;
    }
    double dl = box_dist<false>(nodes_[n.left], q);
    double dr = box_dist<false>(nodes_[n.right], q);
    if (dl < dr) {
      knn_rec(n.left, q, k, heap);
      knn_rec(n.right, q, k, heap);
    } else {
      knn_rec(n.right, q, k, heap);
      knn_rec(n.left, q, k, heap);
    }
  }

  const std::vector<Eigen::Vector3d>& pts_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace xgen
