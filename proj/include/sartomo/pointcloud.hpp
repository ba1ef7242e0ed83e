#pragma once

#include "sartomo/common.hpp"
#include "sartomo/voxel.hpp"

#include <optional>
#include <vector>

namespace sartomo {

/// Thresholded scatterers with view directions and oriented normals.
struct OrientedPointCloud {
  Points points;
  Points normals;    // unit
  Points view_dirs;  // unit
  Eigen::VectorXd magnitudes;

  Eigen::Index size() const { return points.cols(); }
  void validate() const;
  Aabb bounds() const;
};

struct Threshold {
  enum class Kind { Absolute, Quantile };
  Kind kind = Kind::Quantile;
  double value = 0.995;

  static Threshold absolute(double tau) { return {Kind::Absolute, tau}; }
  static Threshold quantile(double q) { return {Kind::Quantile, q}; }
};

struct ThresholdResult {
  std::vector<Eigen::Index> voxels;  // ascending linear indices
  Points points;                     // voxel centers
  Eigen::VectorXd magnitudes;
  double tau = 0.0;
};

/// Voxel centers whose fused magnitude is >= tau. Quantile mode sets tau to
/// the given magnitude quantile (and never admits zero-magnitude voxels).
ThresholdResult threshold_points(const FusedImage& fused, const Threshold& threshold);

/// Look vector of the sub-aperture with the largest |S_m| at each voxel; ties
/// go to the lowest m.
Points max_response_views(const std::vector<SubApertureImage>& images, const std::vector<Eigen::Index>& voxels);
/// Same, for points lying on the image grid.
Points max_response_views(const std::vector<SubApertureImage>& images, const Points& points);

/// Plane-fit normal of a neighborhood (smallest-eigenvalue eigenvector of the
/// uniform covariance), or nullopt when fewer than 3 neighbors or collinear.
/// Neighbor indices must exclude `self`.
std::optional<Vec3> pca_normal(const Points& points, Eigen::Index self, const std::vector<Eigen::Index>& neighbors);

inline constexpr double kDefaultNormalRadius = 0.3;  // meters

/// Local PCA normals oriented so dot(n, v) >= 0; falls back to n = v when a
/// point has fewer than 3 other points within `radius`.
Points estimate_normals(const Points& points, const Points& view_dirs, double radius = kDefaultNormalRadius);

/// Threshold + view directions + normals in one call.
OrientedPointCloud build_point_cloud(const FusedImage& fused, const std::vector<SubApertureImage>& images,
                                     const Threshold& threshold, double radius = kDefaultNormalRadius);

}  // namespace sartomo
