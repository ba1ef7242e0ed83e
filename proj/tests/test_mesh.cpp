#include <doctest.h>

#include "sartomo/mesh.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

using namespace sartomo;

namespace {

const Aabb kUnit{Vec3::Constant(-1.0), Vec3::Constant(1.0)};

double max_residual(const TriangleMesh& m, const ImplicitField& f) {
  return f.values(m.vertices).cwiseAbs().maxCoeff();
}

double brute_chamfer(const Points& a, const Points& b) {
  auto one_way = [](const Points& x, const Points& y) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < y.cols(); ++j) best = std::min(best, (x.col(i) - y.col(j)).norm());
      s += best;
    }
    return s / static_cast<double>(x.cols());
  };
  return 0.5 * (one_way(a, b) + one_way(b, a));
}

bool shares_face(int e0, int e1) {
  // Two cube edges lie on a common face when their four corners agree in one bit.
  const auto a = marching_cubes_edge(e0), b = marching_cubes_edge(e1);
  for (int bit = 0; bit < 3; ++bit) {
    const int v = (a[0] >> bit) & 1;
    if (((a[1] >> bit) & 1) == v && ((b[0] >> bit) & 1) == v && ((b[1] >> bit) & 1) == v) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("case table: every crossing edge is used and patch boundaries lie on cube faces") {
  CHECK(marching_cubes_case(0).empty());
  CHECK(marching_cubes_case(255).empty());
  for (int config = 1; config < 255; ++config) {
    std::set<int> crossing, used;
    for (int e = 0; e < 12; ++e) {
      const auto [a, b] = marching_cubes_edge(e);
      if (((config >> a) & 1) != ((config >> b) & 1)) crossing.insert(e);
    }
    std::map<std::pair<int, int>, int> directed;
    for (const auto& t : marching_cubes_case(config))
      for (int k = 0; k < 3; ++k) {
        used.insert(t[static_cast<std::size_t>(k)]);
        ++directed[{t[static_cast<std::size_t>(k)], t[static_cast<std::size_t>((k + 1) % 3)]}];
      }
    CHECK(used == crossing);
    for (const auto& [edge, n] : directed) {
      const bool interior = directed.count({edge.second, edge.first}) > 0;
      if (!interior) CHECK(shares_face(edge.first, edge.second));
    }
  }
}

TEST_CASE("sphere: area, topology and orientation") {
  SphereField sphere(Vec3::Zero(), 0.8);
  const TriangleMesh m = marching_cubes(sphere, kUnit, 64);
  const double exact = 4 * kPi * 0.8 * 0.8;
  CHECK(std::abs(m.area() - exact) / exact < 0.03);
  CHECK(m.is_watertight());
  CHECK(m.euler_characteristic() == 2);
  double volume = 0.0;
  for (Eigen::Index t = 0; t < m.triangle_count(); ++t) {
    const Vec3 a = m.vertices.col(m.triangles(0, t)), b = m.vertices.col(m.triangles(1, t)),
               c = m.vertices.col(m.triangles(2, t));
    volume += a.dot(b.cross(c)) / 6.0;
  }
  CHECK(volume == doctest::Approx(4.0 / 3.0 * kPi * 0.512).epsilon(0.03));
  for (Eigen::Index v = 0; v < m.vertex_count(); v += 17)
    CHECK(m.normals.col(v).dot(m.vertices.col(v).normalized()) > 0.99);
  const double diag = kUnit.extent().norm() / 64;
  CHECK(max_residual(m, sphere) <= diag);
}

TEST_CASE("closed fields stay watertight at several resolutions") {
  BoxField box(Vec3(0.05, -0.1, 0.02), Vec3(0.5, 0.4, 0.6));
  SphereField off_center(Vec3(0.11, 0.07, -0.13), 0.55);
  for (int res : {32, 41, 48}) {
    CHECK(marching_cubes(box, kUnit, res).is_watertight());
    const TriangleMesh s = marching_cubes(off_center, kUnit, res);
    CHECK(s.is_watertight());
    CHECK(s.euler_characteristic() == 2);
  }
}

TEST_CASE("plane: vertices on the plane") {
  PlaneField plane(Vec3::UnitZ(), 0.0);
  const TriangleMesh m = marching_cubes(plane, kUnit, 16);
  CHECK((m.vertices.row(2).array().abs() <= 0.5 * 2.0 / 16).all());
  PlaneField shifted(Vec3(0.1, -0.2, 1.0), 0.013);
  const TriangleMesh s = marching_cubes(shifted, kUnit, 16);
  CHECK(max_residual(s, shifted) < 1e-12);
}

TEST_CASE("residual shrinks with resolution") {
  SphereField sphere(Vec3(0.03, 0.0, -0.02), 0.7);
  double prev = std::numeric_limits<double>::infinity();
  for (int res : {16, 32, 64}) {
    const double r = max_residual(marching_cubes(sphere, kUnit, res), sphere);
    CHECK(r < prev);
    prev = r;
  }
}

TEST_CASE("no sign change is an error") {
  SphereField far(Vec3::Constant(5.0), 0.5);
  try {
    marching_cubes(far, kUnit, 16);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyLevelSet);
  }
  CHECK_THROWS_AS(marching_cubes(far, kUnit, 4), Error);
}

TEST_CASE("chamfer distance") {
  Rng rng(4);
  Points a(3, 60), b(3, 45);
  for (int i = 0; i < 60; ++i) a.col(i) = kUnit.sample(rng);
  for (int i = 0; i < 45; ++i) b.col(i) = kUnit.sample(rng);
  CHECK(chamfer(a, a) == 0.0);
  CHECK(std::abs(chamfer(a, b) - brute_chamfer(a, b)) <= 1e-12);
  CHECK(chamfer(a, b) == chamfer(b, a));

  Points lattice(3, 27);
  int k = 0;
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y)
      for (int z = 0; z < 3; ++z) lattice.col(k++) = 3.0 * Vec3(x, y, z);
  const Points moved = lattice.colwise() + Vec3(1.0, 0.0, 0.0);
  CHECK(chamfer(lattice, moved) == 1.0);
  CHECK_THROWS_AS(chamfer(Points(3, 0), a), Error);
}

TEST_CASE("mesh sampling and chamfer against the analytic sphere") {
  SphereField sphere(Vec3::Zero(), 0.8);
  const TriangleMesh m = marching_cubes(sphere, kUnit, 48);
  const Points s = m.sample(2000, 1);
  CHECK(((s.colwise().norm().array() - 0.8).abs() < 0.01).all());
  CHECK(s == m.sample(2000, 1));
  CHECK(chamfer(m, s, 2) < 0.05);
}

TEST_CASE("PLY round trip and OBJ output") {
  const TriangleMesh m = marching_cubes(SphereField(Vec3::Zero(), 0.5), kUnit, 12);
  const auto dir = std::filesystem::temp_directory_path();
  write_mesh_ply(dir / "sartomo_mesh_test.ply", m);
  const TriangleMesh back = read_mesh_ply(dir / "sartomo_mesh_test.ply");
  CHECK(back.vertices == m.vertices);
  CHECK(back.triangles == m.triangles);
  CHECK(back.normals == m.normals);
  write_mesh_obj(dir / "sartomo_mesh_test.obj", m);
  std::ifstream obj(dir / "sartomo_mesh_test.obj");
  int faces = 0;
  for (std::string line; std::getline(obj, line);) faces += line.rfind("f ", 0) == 0;
  CHECK(faces == m.triangle_count());
  std::filesystem::remove(dir / "sartomo_mesh_test.ply");
  std::filesystem::remove(dir / "sartomo_mesh_test.obj");
}
