#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "fusemap/errors.hpp"
#include "fusemap/point_cloud.hpp"

namespace fusemap {

/// Exact 3D kd-tree. Queries return the true nearest neighbors (no
/// approximation); ties are broken toward the smaller point index, which keeps
/// results reproducible across runs and platforms.
class KdTree {
 public:
  struct Neighbor {
    std::size_t index = 0;
    double distance = 0.0;
  };

  explicit KdTree(std::vector<Eigen::Vector3d> points) : points_(std::move(points)) {
    if (points_.empty()) throw EmptyCloud("cannot build a spatial index over an empty cloud");
    indices_.resize(points_.size());
    for (std::uint32_t i = 0; i < indices_.size(); ++i) indices_[i] = i;
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    root_ = build(0, static_cast<std::uint32_t>(points_.size()));
  }

  std::size_t size() const { return points_.size(); }
  const std::vector<Eigen::Vector3d>& points() const { return points_; }

  Neighbor nearest(const Eigen::Vector3d& query) const {
    Best best;
    search(root_, query, 1, &best, nullptr);
    return {best.heap[0].index, std::sqrt(best.heap[0].dist2)};
  }

  /// k nearest neighbors, closest first. If the cloud has fewer than k points
  /// all of them are returned.
  std::vector<Neighbor> knn(const Eigen::Vector3d& query, std::size_t k) const {
    Best best;
    search(root_, query, std::min(k, points_.size()), &best, nullptr);
    std::sort(best.heap.begin(), best.heap.end(), [](const Entry& a, const Entry& b) {
      return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.index < b.index;
    });
    std::vector<Neighbor> out;
    out.reserve(best.heap.size());
    for (const auto& e : best.heap) out.push_back({e.index, std::sqrt(e.dist2)});
    return out;
  }

  /// All points within radius (inclusive), sorted by index.
  std::vector<std::size_t> radius(const Eigen::Vector3d& query, double r) const {
    std::vector<std::size_t> out;
    RadiusQuery rq{r * r, &out};
    search(root_, query, 0, nullptr, &rq);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  static constexpr std::uint32_t kLeafSize = 16;
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

  struct Node {
    std::uint32_t begin = 0, end = 0;        // index range for leaves
    std::uint32_t left = kNone, right = kNone;
    int axis = 0;
    double split = 0.0;
  };

  struct Entry {
    double dist2;
    std::size_t index;
  };

  // Fixed-capacity max-heap on (dist2, index): the worst candidate sits on top.
  struct Best {
    std::vector<Entry> heap;
    static bool worse(const Entry& a, const Entry& b) {
      return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.index < b.index;
    }
    double worst_dist2(std::size_t k) const {
      return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.front().dist2;
    }
    void offer(const Entry& e, std::size_t k) {
      if (heap.size() < k) {
        heap.push_back(e);
        std::push_heap(heap.begin(), heap.end(), worse);
      } else if (worse(e, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), worse);
        heap.back() = e;
        std::push_heap(heap.begin(), heap.end(), worse);
      }
    }
  };

  struct RadiusQuery {
    double r2;
    std::vector<std::size_t>* out;
  };

  std::uint32_t build(std::uint32_t begin, std::uint32_t end) {
    Node node;
    node.begin = begin;
    node.end = end;
    if (end - begin > kLeafSize) {
      Eigen::Vector3d lo = points_[indices_[begin]];
      Eigen::Vector3d hi = lo;
      for (std::uint32_t i = begin + 1; i < end; ++i) {
        lo = lo.cwiseMin(points_[indices_[i]]);
        hi = hi.cwiseMax(points_[indices_[i]]);
      }
      int axis = 0;
      (hi - lo).maxCoeff(&axis);
      const std::uint32_t mid = begin + (end - begin) / 2;
      std::nth_element(indices_.begin() + begin, indices_.begin() + mid, indices_.begin() + end,
                       [&](std::uint32_t a, std::uint32_t b) {
                         const double ca = points_[a][axis], cb = points_[b][axis];
                         return ca != cb ? ca < cb : a < b;
                       });
      node.axis = axis;
      node.split = points_[indices_[mid]][axis];
      const std::uint32_t id = static_cast<std::uint32_t>(nodes_.size());
      nodes_.push_back(node);
      const std::uint32_t left = build(begin, mid);
      const std::uint32_t right = build(mid, end);
      nodes_[id].left = left;
      nodes_[id].right = right;
      return id;
    }
    nodes_.push_back(node);
    return static_cast<std::uint32_t>(nodes_.size() - 1);
  }

  void search(std::uint32_t node_id, const Eigen::Vector3d& q, std::size_t k, Best* best,
              RadiusQuery* radius) const {
    const Node& node = nodes_[node_id];
    if (node.left == kNone) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = indices_[i];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (best) best->offer({d2, idx}, k);
        if (radius && d2 <= radius->r2) radius->out->push_back(idx);
      }
      return;
    }
    const double delta = q[node.axis] - node.split;
    const std::uint32_t near = delta < 0.0 ? node.left : node.right;
    const std::uint32_t far = delta < 0.0 ? node.right : node.left;
    search(near, q, k, best, radius);
    const double plane2 = delta * delta;
    const bool visit_far = best ? plane2 <= best->worst_dist2(k) : plane2 <= radius->r2;
    if (visit_far) search(far, q, k, best, radius);
  }

  std::vector<Eigen::Vector3d> points_;
  std::vector<std::uint32_t> indices_;
  std::vector<Node> nodes_;
  std::uint32_t root_ = 0;
};

}  // namespace fusemap
