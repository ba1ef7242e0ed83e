#include <doctest.h>

#include "sartomo/kdtree.hpp"
#include "sartomo/ply.hpp"
#include "sartomo/pointcloud.hpp"

#include <algorithm>
#include <filesystem>

using namespace sartomo;

namespace {

Points random_points(int n, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Points p(3, n);
  for (int i = 0; i < n; ++i) p.col(i) = Vec3(u(rng), u(rng), u(rng));
  return p;
}

VoxelGrid line_grid(int n) {
  VoxelGrid g;
  g.dims = {n, 1, 1};
  g.spacing = Vec3::Constant(0.1);
  g.origin = Vec3::Zero();
  return g;
}

}  // namespace

TEST_CASE("k-d tree radius search equals brute force") {
  const Points pts = random_points(800, 1);
  const KdTree tree(pts, 5);
  const Points queries = random_points(60, 2, 1.2);
  for (int q = 0; q < queries.cols(); ++q) {
    for (double r : {0.05, 0.2, 0.6}) {
      std::vector<Eigen::Index> expect;
      for (Eigen::Index i = 0; i < pts.cols(); ++i)
        if ((pts.col(i) - queries.col(q)).norm() <= r) expect.push_back(i);
      CHECK(tree.radius_search(queries.col(q), r) == expect);
    }
    Eigen::Index best = 0;
    double bd = 1e300;
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
      const double d = (pts.col(i) - queries.col(q)).norm();
      if (d < bd) bd = d, best = i;
    }
    const auto [idx, dist] = tree.nearest(queries.col(q));
    CHECK(idx == best);
    CHECK(dist == doctest::Approx(bd));
  }
}

TEST_CASE("k-d tree handles duplicate points") {
  Points pts(3, 20);
  pts.setZero();
  const KdTree tree(pts, 2);
  CHECK(tree.radius_search(Vec3::Zero(), 0.0).size() == 20);
  CHECK(tree.nearest(Vec3(1, 0, 0)).first == 0);
}

TEST_CASE("absolute threshold keeps voxels at or above tau") {
  FusedImage f{line_grid(6), Eigen::VectorXd(6)};
  f.values << 0.1, 0.5, 0.9, 0.5, 0.0, 1.2;
  const auto r = threshold_points(f, Threshold::absolute(0.5));
  CHECK(r.voxels == std::vector<Eigen::Index>{1, 2, 3, 5});
  CHECK(r.tau == 0.5);
  CHECK(r.points.col(2).x() == doctest::Approx(0.3));
}

TEST_CASE("quantile threshold selects the top fraction") {
  FusedImage f{line_grid(10), Eigen::VectorXd::LinSpaced(10, 1.0, 10.0)};
  // q = 0.8 keeps ceil(0.2 * 10) = 2 voxels.
  const auto r = threshold_points(f, Threshold::quantile(0.8));
  CHECK(r.voxels == std::vector<Eigen::Index>{8, 9});
  CHECK(r.tau == 9.0);
  // Zero-magnitude voxels never pass; nothing left is an error.
  FusedImage z{line_grid(10), Eigen::VectorXd::Zero(10)};
  CHECK_THROWS_AS(threshold_points(z, Threshold::quantile(0.5)), Error);
}

TEST_CASE("view direction comes from the strongest sub-aperture") {
  const VoxelGrid g = line_grid(2);
  SubApertureImage a{0, g, Eigen::VectorXcd(2), 0.0, 0.0};
  SubApertureImage b{1, g, Eigen::VectorXcd(2), kPi / 2, 0.0};
  a.values << 2.0, 1.0;
  b.values << 1.0, cdouble(0.0, 3.0);
  const Points v = max_response_views({a, b}, std::vector<Eigen::Index>{0, 1});
  CHECK((v.col(0) - Vec3(1, 0, 0)).norm() < 1e-12);
  CHECK((v.col(1) - Vec3(0, 1, 0)).norm() < 1e-12);
}

TEST_CASE("plane normals are recovered and oriented toward the view") {
  Rng rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  Points pts(3, 300);
  const Vec3 n = Vec3(0.2, -0.3, 1.0).normalized();
  const Vec3 t1 = n.unitOrthogonal();
  const Vec3 t2 = n.cross(t1);
  for (int i = 0; i < 300; ++i) pts.col(i) = u(rng) * t1 + u(rng) * t2;
  Points views(3, 300);
  for (int i = 0; i < 300; ++i) views.col(i) = (i % 2 ? -n : n);
  const Points normals = estimate_normals(pts, views, 0.4);
  for (int i = 0; i < 300; ++i) {
    CHECK(std::abs(std::abs(normals.col(i).dot(n)) - 1.0) < 1e-9);
    CHECK(normals.col(i).dot(views.col(i)) >= 0.0);
  }
}

TEST_CASE("normals fall back to the view direction when isolated or collinear") {
  Points pts(3, 4);
  pts << 0, 1, 2, 10,
         0, 0, 0, 0,
         0, 0, 0, 0;
  Points views(3, 4);
  for (int i = 0; i < 4; ++i) views.col(i) = Vec3(0, 0.6, 0.8);
  const Points normals = estimate_normals(pts, views, 2.5);
  for (int i = 0; i < 4; ++i) CHECK((normals.col(i) - views.col(i)).norm() < 1e-12);
}

TEST_CASE("point cloud PLY round trip") {
  OrientedPointCloud c;
  c.points = random_points(10, 3);
  c.normals = random_points(10, 4).colwise().normalized();
  c.view_dirs = random_points(10, 5).colwise().normalized();
  c.magnitudes = Eigen::VectorXd::LinSpaced(10, 0.5, 5.0);
  const auto path = std::filesystem::temp_directory_path() / "sartomo_test_cloud.ply";
  write_point_cloud_ply(path, c);
  const auto back = read_point_cloud_ply(path);
  CHECK((back.points - c.points).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((back.normals - c.normals).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((back.view_dirs - c.view_dirs).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((back.magnitudes - c.magnitudes).cwiseAbs().maxCoeff() < 1e-12);
  std::filesystem::remove(path);
}
