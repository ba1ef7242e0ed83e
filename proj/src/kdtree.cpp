#include "sartomo/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace sartomo {

KdTree::KdTree(Points points, int leaf_size) : points_(std::move(points)), leaf_size_(std::max(1, leaf_size)) {
  order_.resize(static_cast<std::size_t>(points_.cols()));
  std::iota(order_.begin(), order_.end(), Eigen::Index{0});
  if (!order_.empty()) build(0, static_cast<int>(order_.size()), 0);
}

int KdTree::build(int begin, int end, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= leaf_size_) return id;

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (int i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_.col(order_[static_cast<std::size_t>(i)]));
    hi = hi.cwiseMax(points_.col(order_[static_cast<std::size_t>(i)]));
  }
  int axis;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] <= lo[axis]) return id;  // all points coincide
  (void)depth;

  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](Eigen::Index a, Eigen::Index b) {
                     const double pa = points_(axis, a), pb = points_(axis, b);
                     return pa < pb || (pa == pb && a < b);
                   });
  const double split = points_(axis, order_[static_cast<std::size_t>(mid)]);
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid, end, depth + 1);
  nodes_[static_cast<std::size_t>(id)].axis = axis;
  nodes_[static_cast<std::size_t>(id)].split = split;
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

void KdTree::radius_recurse(int node_id, const Vec3& q, double r2, std::vector<Eigen::Index>& out) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const Eigen::Index idx = order_[static_cast<std::size_t>(i)];
      if ((points_.col(idx) - q).squaredNorm() <= r2) out.push_back(idx);
    }
    return;
  }
  const double d = q[node.axis] - node.split;
  // Left holds coordinates <= split, right >= split.
  if (d <= 0.0 || d * d <= r2) radius_recurse(node.left, q, r2, out);
  if (d >= 0.0 || d * d <= r2) radius_recurse(node.right, q, r2, out);
}

std::vector<Eigen::Index> KdTree::radius_search(const Vec3& q, double radius) const {
  std::vector<Eigen::Index> out;
  if (nodes_.empty()) return out;
  radius_recurse(0, q, radius * radius, out);
  std::sort(out.begin(), out.end());
  return out;
}

void KdTree::nearest_recurse(int node_id, const Vec3& q, Eigen::Index& best, double& best_d2) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const Eigen::Index idx = order_[static_cast<std::size_t>(i)];
      const double d2 = (points_.col(idx) - q).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
        best_d2 = d2;
        best = idx;
      }
    }
    return;
  }
  const double d = q[node.axis] - node.split;
  const int first = d <= 0.0 ? node.left : node.right;
  const int second = d <= 0.0 ? node.right : node.left;
  nearest_recurse(first, q, best, best_d2);
  if (d * d <= best_d2) nearest_recurse(second, q, best, best_d2);
}

std::pair<Eigen::Index, double> KdTree::nearest(const Vec3& q) const {
  require(!nodes_.empty(), ErrorCode::InvalidArgument, "nearest neighbor query on an empty tree");
  Eigen::Index best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  nearest_recurse(0, q, best, best_d2);
  return {best, std::sqrt(best_d2)};
}

}  // namespace sartomo
