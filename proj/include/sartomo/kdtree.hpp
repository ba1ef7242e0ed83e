#pragma once

#include "sartomo/common.hpp"

#include <utility>
#include <vector>

namespace sartomo {

/// Static 3-d tree over a point set (one point per column).
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(Points points, int leaf_size = 8);

  /// Indices of all points with ||p - q|| <= radius, ascending.
  std::vector<Eigen::Index> radius_search(const Vec3& q, double radius) const;
  /// (index, distance) of the nearest point. Ties resolve to the lower index.
  std::pair<Eigen::Index, double> nearest(const Vec3& q) const;

  Eigen::Index size() const { return points_.cols(); }
  const Points& points() const { return points_; }

 private:
  struct Node {
    int begin = 0, end = 0;  // range into order_
    int axis = -1;           // -1 for leaves
    double split = 0.0;
    int left = -1, right = -1;
  };
  int build(int begin, int end, int depth);
  void radius_recurse(int node, const Vec3& q, double r2, std::vector<Eigen::Index>& out) const;
  void nearest_recurse(int node, const Vec3& q, Eigen::Index& best, double& best_d2) const;

  Points points_;
  std::vector<Eigen::Index> order_;
  std::vector<Node> nodes_;
  int leaf_size_ = 8;
};

}  // namespace sartomo
