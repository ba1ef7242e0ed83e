#include "sartomo/pointcloud.hpp"

#include "sartomo/kdtree.hpp"
#include "sartomo/scene.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>

namespace sartomo {

void OrientedPointCloud::validate() const {
  const auto n = points.cols();
  require(normals.cols() == n && view_dirs.cols() == n && magnitudes.size() == n, ErrorCode::ShapeMismatch,
          "point cloud arrays are not congruent");
  for (Eigen::Index i = 0; i < n; ++i) {
    require(std::abs(normals.col(i).norm() - 1.0) <= 1e-6, ErrorCode::InvalidArgument, "normal is not unit length");
    require(std::abs(view_dirs.col(i).norm() - 1.0) <= 1e-6, ErrorCode::InvalidArgument,
            "view direction is not unit length");
  }
  require(points.allFinite() && (magnitudes.array() >= 0.0).all(), ErrorCode::InvalidArgument,
          "point cloud has non-finite points or negative magnitudes");
}

Aabb OrientedPointCloud::bounds() const {
  require(size() > 0, ErrorCode::EmptyPointCloud, "empty point cloud");
  return {points.rowwise().minCoeff(), points.rowwise().maxCoeff()};
}

ThresholdResult threshold_points(const FusedImage& fused, const Threshold& threshold) {
  const Eigen::VectorXd& v = fused.values;
  require(v.size() == fused.grid.size(), ErrorCode::ShapeMismatch, "fused image does not match its grid");
  ThresholdResult r;
  bool require_positive = false;
  if (threshold.kind == Threshold::Kind::Absolute) {
    require(threshold.value > 0.0, ErrorCode::InvalidArgument, "threshold must be positive");
    r.tau = threshold.value;
  } else {
    require(threshold.value > 0.0 && threshold.value < 1.0, ErrorCode::InvalidArgument,
            "quantile must lie in (0, 1)");
    std::vector<double> sorted(v.data(), v.data() + v.size());
    const auto keep = static_cast<std::size_t>(std::ceil((1.0 - threshold.value) * static_cast<double>(v.size()) - 1e-9));
    const std::size_t pos = std::clamp<std::size_t>(keep, 1, sorted.size()) - 1;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(pos), sorted.end(),
                     std::greater<double>());
    r.tau = sorted[pos];
    require_positive = true;
  }
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v[i] >= r.tau && (!require_positive || v[i] > 0.0)) r.voxels.push_back(i);
  require(!r.voxels.empty(), ErrorCode::EmptyPointCloud, "empty point cloud");
  r.points.resize(3, static_cast<Eigen::Index>(r.voxels.size()));
  r.magnitudes.resize(static_cast<Eigen::Index>(r.voxels.size()));
  for (std::size_t k = 0; k < r.voxels.size(); ++k) {
    r.points.col(static_cast<Eigen::Index>(k)) = fused.grid.center(r.voxels[k]);
    r.magnitudes[static_cast<Eigen::Index>(k)] = v[r.voxels[k]];
  }
  return r;
}

Points max_response_views(const std::vector<SubApertureImage>& images, const std::vector<Eigen::Index>& voxels) {
  require(!images.empty(), ErrorCode::InvalidArgument, "view directions need at least one sub-aperture image");
  Points views(3, static_cast<Eigen::Index>(voxels.size()));
  for (std::size_t k = 0; k < voxels.size(); ++k) {
    std::size_t best = 0;
    double best_mag = -1.0;
    for (std::size_t m = 0; m < images.size(); ++m) {
      const double mag = std::abs(images[m].values[voxels[k]]);
      if (mag > best_mag) {
        best_mag = mag;
        best = m;
      }
    }
    views.col(static_cast<Eigen::Index>(k)) = look_vector(images[best].mean_azimuth, images[best].mean_elevation);
  }
  return views;
}

Points max_response_views(const std::vector<SubApertureImage>& images, const Points& points) {
  require(!images.empty(), ErrorCode::InvalidArgument, "view directions need at least one sub-aperture image");
  std::vector<Eigen::Index> voxels;
  voxels.reserve(static_cast<std::size_t>(points.cols()));
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    const auto v = images.front().grid.locate(points.col(i));
    require(v.has_value(), ErrorCode::InvalidArgument, "point does not lie on the image grid");
    voxels.push_back(*v);
  }
  return max_response_views(images, voxels);
}

std::optional<Vec3> pca_normal(const Points& points, Eigen::Index self, const std::vector<Eigen::Index>& neighbors) {
  if (neighbors.size() < 3) return std::nullopt;
  Vec3 mean = points.col(self);
  for (auto idx : neighbors) mean += points.col(idx);
  const double n = static_cast<double>(neighbors.size() + 1);
  mean /= n;
  Mat3 cov = (points.col(self) - mean) * (points.col(self) - mean).transpose();
  for (auto idx : neighbors) cov += (points.col(idx) - mean) * (points.col(idx) - mean).transpose();
  cov /= n;
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 ev = es.eigenvalues();  // ascending
  const double scale = std::max(ev[2], std::numeric_limits<double>::min());
  if (ev[1] - ev[0] <= 1e-9 * scale) return std::nullopt;  // collinear (or isotropic) neighborhood
  return Vec3(es.eigenvectors().col(0).normalized());
}

Points estimate_normals(const Points& points, const Points& view_dirs, double radius) {
  require(radius > 0.0, ErrorCode::InvalidArgument, "normal radius must be positive");
  require(view_dirs.cols() == points.cols(), ErrorCode::ShapeMismatch, "view directions do not match points");
  const KdTree tree(points);
  Points normals(3, points.cols());
  parallel_for(static_cast<std::size_t>(points.cols()), [&](std::size_t b, std::size_t e) {
    for (auto i = static_cast<Eigen::Index>(b); i < static_cast<Eigen::Index>(e); ++i) {
      auto nb = tree.radius_search(points.col(i), radius);
      nb.erase(std::remove(nb.begin(), nb.end(), i), nb.end());
      const Vec3 v = view_dirs.col(i).normalized();
      if (auto n = pca_normal(points, i, nb)) {
        normals.col(i) = n->dot(v) < 0.0 ? Vec3(-*n) : *n;
      } else {
        normals.col(i) = v;
      }
    }
  });
  return normals;
}

OrientedPointCloud build_point_cloud(const FusedImage& fused, const std::vector<SubApertureImage>& images,
                                     const Threshold& threshold, double radius) {
  auto t = threshold_points(fused, threshold);
  OrientedPointCloud cloud;
  cloud.view_dirs = max_response_views(images, t.voxels);
  cloud.normals = estimate_normals(t.points, cloud.view_dirs, radius);
  cloud.points = std::move(t.points);
  cloud.magnitudes = std::move(t.magnitudes);
  return cloud;
}

}  // namespace sartomo
