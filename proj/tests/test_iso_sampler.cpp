#include <doctest.h>

#include "sartomo/iso_sampler.hpp"

#include <cmath>

using namespace sartomo;

namespace {

const Aabb kUnitBox{Vec3::Constant(-1.5), Vec3::Constant(1.5)};

SamplerParams params_for(const Aabb& box, int target) { return SamplerParams::defaults(box, target); }

Points uniform_points(const Aabb& box, int n, std::uint64_t seed) {
  Rng rng(seed);
  Points p(3, n);
  for (int i = 0; i < n; ++i) p.col(i) = box.sample(rng);
  return p;
}

double coefficient_of_variation(const Points& p) {
  const Eigen::VectorXd d = nearest_neighbor_distances(p);
  const double mean = d.mean();
  return std::sqrt((d.array() - mean).square().mean()) / mean;
}

// Distance from a point on the surface of the cube [-h, h]^3 to its nearest edge.
double cube_edge_distance(const Vec3& p, double h) {
  const Vec3 a = p.cwiseAbs();
  int face;
  a.maxCoeff(&face);
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k)
    if (k != face) best = std::min(best, h - a[k]);
  return best;
}

double mean_edge_distance(const IsoPointSet& iso, double h) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < iso.size(); ++i) total += cube_edge_distance(iso.points.col(i), h);
  return total / static_cast<double>(iso.size());
}

void check_on_surface(const IsoPointSet& iso, const ImplicitField& field) {
  CHECK((iso.residuals.array() <= 1e-4).all());
  CHECK((field.values(iso.points).array().abs() <= 1e-4).all());
  CHECK(((iso.normals.colwise().norm().array() - 1.0).abs() < 1e-12).all());
}

}  // namespace

TEST_CASE("clip keeps short steps and caps long ones") {
  CHECK(clip_step(Vec3(0.1, 0.0, 0.0), 0.5) == Vec3(0.1, 0.0, 0.0));
  CHECK((clip_step(Vec3(1.0, 0.0, 0.0), 0.5) - Vec3(0.5, 0.0, 0.0)).norm() < 1e-15);
  CHECK(clip_step(Vec3::Zero(), 0.5) == Vec3::Zero());
  Rng rng(1);
  std::normal_distribution<double> g;
  for (int i = 0; i < 200; ++i) {
    const Vec3 x = Vec3(g(rng), g(rng), g(rng)) * 2.0;
    const Vec3 c = clip_step(x, 1.0);
    CHECK(std::abs(c.norm() - std::min(x.norm(), 1.0)) < 1e-12);
    CHECK(c.normalized().dot(x.normalized()) == doctest::Approx(1.0));
  }
}

TEST_CASE("density weight") {
  CHECK(density_weight(0.0, 0.3) == 1.0);
  CHECK(density_weight(0.3, 0.3) == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("Newton projection is exact in one step on a plane") {
  PlaneField plane(Vec3::UnitZ(), 0.0);
  auto params = params_for(kUnitBox, 100);
  params.tau0 = 1.0;
  Points start(3, 1);
  start.col(0) = Vec3(0.3, -0.1, 0.5);
  const auto r = project_newton(plane, start, params);
  CHECK(r.status[0] == ProjectionStatus::Converged);
  CHECK(r.iterations[0] == 1);
  CHECK((r.points.col(0) - Vec3(0.3, -0.1, 0.0)).norm() < 1e-15);
}

TEST_CASE("Newton projection leaves on-surface points alone") {
  PlaneField plane(Vec3::UnitZ(), 0.0);
  Points start(3, 1);
  start.col(0) = Vec3(0.3, -0.1, 5e-5);
  const auto r = project_newton(plane, start, params_for(kUnitBox, 100));
  CHECK(r.iterations[0] == 0);
  CHECK(r.points.col(0) == start.col(0));
}

TEST_CASE("Newton steps are clipped to tau0") {
  PlaneField plane(Vec3::UnitZ(), 0.0);
  auto params = params_for(kUnitBox, 100);
  params.tau0 = 0.1;
  params.max_newton_iters = 3;
  Points start(3, 1);
  start.col(0) = Vec3(0.0, 0.0, 1.0);
  const auto r = project_newton(plane, start, params);
  CHECK(r.status[0] == ProjectionStatus::NotConverged);
  CHECK(r.points(2, 0) == doctest::Approx(0.7));
}

TEST_CASE("degenerate gradient is reported") {
  // f = |p|^2 - 1 has a vanishing gradient at the origin.
  struct Quadric final : ImplicitField {
    void evaluate(const Points& p, Eigen::VectorXd& f, Points& J) const override {
      f = p.colwise().squaredNorm().transpose().array() - 1.0;
      J = 2.0 * p;
    }
  } quadric;
  Points start(3, 1);
  start.col(0) = Vec3::Zero();
  const auto r = project_newton(quadric, start, params_for(kUnitBox, 100));
  CHECK(r.status[0] == ProjectionStatus::DegenerateGradient);
}

TEST_CASE("uniform resampling: lone point and near duplicates") {
  PlaneField plane(Vec3::UnitZ(), 0.0);
  auto params = params_for(kUnitBox, 100);
  IsoPointSet one = project_to_iso(plane, Points(Vec3(0.2, 0.1, 0.0)), params);
  const auto r1 = resample_uniform(one, plane, params);
  CHECK(r1.points == one.points);

  Points two(3, 2);
  two.col(0) = Vec3(0.0, 0.0, 0.0);
  two.col(1) = Vec3(0.001, 0.0005, 0.0);
  const IsoPointSet iso = project_to_iso(plane, two, params);
  const auto r2 = resample_uniform(iso, plane, params);
  REQUIRE(r2.size() == 2);
  CHECK((r2.points.col(0) - r2.points.col(1)).norm() > (two.col(0) - two.col(1)).norm());
  check_on_surface(r2, plane);
}

TEST_CASE("uniform resampling does not increase nearest-neighbor CV") {
  for (std::uint64_t seed : {1, 2, 3}) {
    SphereField sphere(Vec3::Zero(), 1.0);
    const auto params = params_for(kUnitBox, 400);
    const IsoPointSet iso = project_to_iso(sphere, uniform_points(kUnitBox, 400, seed), params);
    const IsoPointSet out = resample_uniform(iso, sphere, params);
    check_on_surface(out, sphere);
    CHECK(coefficient_of_variation(out.points) <= coefficient_of_variation(iso.points));
  }
}

TEST_CASE("edge-aware offsets: coplanar neighbors reduce to the plain mean") {
  PlaneField plane(Vec3::UnitZ(), 0.0);
  auto params = params_for(kUnitBox, 100);
  params.epsilon = 0.5;
  Points pts(3, 4);
  pts << 0.0, 0.2, 0.0, 0.3,
         0.0, 0.0, 0.1, 0.2,
         0.0, 0.0, 0.0, 0.0;
  const IsoPointSet iso = project_to_iso(plane, pts, params);
  const auto off = ear_offsets(iso, params);
  const Vec3 mean = (pts.col(1) + pts.col(2) + pts.col(3)) / 3.0 - pts.col(0);
  CHECK((off.edge.col(0) - mean).norm() < 1e-12);
}

TEST_CASE("edge-aware resampling leaves isolated points") {
  PlaneField plane(Vec3::UnitZ(), 0.0);
  auto params = params_for(kUnitBox, 100);
  Points pts(3, 2);
  pts.col(0) = Vec3(-1.0, 0.0, 0.0);
  pts.col(1) = Vec3(1.0, 0.0, 0.0);
  const IsoPointSet iso = project_to_iso(plane, pts, params);
  const auto off = ear_offsets(iso, params);
  CHECK(off.edge.isZero());
  CHECK(off.repulsion.isZero());
  CHECK(resample_edge_aware(iso, plane, params).points == iso.points);
}

TEST_CASE("edge-aware resampling pushes cube points off the edges") {
  const double h = 0.5;
  BoxField cube(Vec3::Zero(), Vec3::Constant(h));
  const Aabb box{Vec3::Constant(-0.8), Vec3::Constant(0.8)};
  for (int target : {300, 1000}) {
    const auto params = params_for(box, target);
    const IsoPointSet iso = project_to_iso(cube, uniform_points(box, target, 7), params);
    const IsoPointSet out = resample_edge_aware(iso, cube, params);
    check_on_surface(out, cube);
    CHECK(mean_edge_distance(out, h) > mean_edge_distance(iso, h));
  }
}

TEST_CASE("upsampling inserts at one third toward the farthest neighbor") {
  PlaneField plane(Vec3::UnitZ(), 0.0);
  auto params = params_for(Aabb{Vec3::Constant(-5), Vec3::Constant(5)}, 10);
  params.epsilon = 4.0;
  Points pts(3, 2);
  pts.col(0) = Vec3::Zero();
  pts.col(1) = Vec3(3.0, 0.0, 0.0);
  const IsoPointSet iso = project_to_iso(plane, pts, params);
  const IsoPointSet up = upsample(iso, plane, params, 3);
  REQUIRE(up.size() == 3);
  CHECK((up.points.col(2) - Vec3(1.0, 0.0, 0.0)).norm() < 1e-12);
  CHECK(upsample(iso, plane, params, 2).points == iso.points);
}

TEST_CASE("upsampling a plane closes the largest gap") {
  PlaneField plane(Vec3::UnitZ(), 0.0);
  const Aabb box{Vec3(-1, -1, -0.5), Vec3(1, 1, 0.5)};
  const auto params = params_for(box, 50);
  Points pts = uniform_points(box, 50, 4);
  pts.row(2).setZero();
  const IsoPointSet iso = project_to_iso(plane, pts, params);
  const IsoPointSet up = upsample(iso, plane, params, 200);
  CHECK(up.size() == 200);
  check_on_surface(up, plane);
  CHECK(nearest_neighbor_distances(up.points).maxCoeff() < nearest_neighbor_distances(iso.points).maxCoeff());
}

TEST_CASE("refresh on an analytic sphere") {
  SphereField sphere(Vec3(0.1, -0.2, 0.05), 1.0);
  const Aabb box{Vec3::Constant(-1.4), Vec3::Constant(1.4)};
  Rng rng(3);
  Points seeds(3, 300);
  for (int i = 0; i < 300; ++i) {
    Vec3 d(std::normal_distribution<double>()(rng), std::normal_distribution<double>()(rng),
           std::normal_distribution<double>()(rng));
    seeds.col(i) = Vec3(0.1, -0.2, 0.05) + d.normalized();
  }
  const auto params = params_for(box, 500);
  const IsoPointSet a = refresh_iso_points(sphere, seeds, params, 500, 11);
  CHECK(a.size() == 500);
  check_on_surface(a, sphere);
  for (Eigen::Index i = 0; i < a.size(); ++i)
    CHECK(std::abs((a.points.col(i) - Vec3(0.1, -0.2, 0.05)).norm() - 1.0) < 5e-3);
  const IsoPointSet b = refresh_iso_points(sphere, seeds, params, 500, 11);
  CHECK(a.points == b.points);
  CHECK(a.normals == b.normals);
}

TEST_CASE("refresh without a zero-level set in the box fails") {
  PlaneField plane(Vec3::UnitZ(), 10.0);
  const auto params = params_for(kUnitBox, 100);
  CHECK_THROWS_AS(refresh_iso_points(plane, uniform_points(kUnitBox, 50, 1), params, 100, 1), Error);
  try {
    refresh_iso_points(plane, uniform_points(kUnitBox, 50, 1), params, 100, 1);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IsoSurfaceNotFound);
  }
}
