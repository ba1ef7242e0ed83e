#include "sartomo/mesh.hpp"

#include <algorithm>
#include <array>
#include <vector>

namespace sartomo {

namespace {

// The 256 triangulations are derived once from face walks instead of being
// typed in. Each face contributes directed segments that cut off its inside
// corners (on ambiguous faces each inside corner is cut off separately);
// because the segments on a face depend only on that face's corner signs,
// neighboring cells always agree and the surface stays watertight.
struct CaseTable {
  std::array<std::array<int, 2>, 12> edges{};
  std::array<std::vector<std::array<int, 3>>, 256> triangles;

  CaseTable() {
    int e = 0;
    for (int a = 0; a < 8; ++a)
      for (int bit = 0; bit < 3; ++bit)
        if (!(a & (1 << bit))) edges[static_cast<std::size_t>(e++)] = {a, a | (1 << bit)};

    // Corners of each face counter-clockwise seen from outside the cube.
    std::array<std::array<int, 4>, 6> faces{};
    for (int axis = 0; axis < 3; ++axis) {
      const int u = (axis + 1) % 3, v = (axis + 2) % 3;
      for (int side = 0; side < 2; ++side) {
        std::array<int, 4> f{};
        const int uv[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
        for (int k = 0; k < 4; ++k) f[static_cast<std::size_t>(k)] = (side << axis) | (uv[k][0] << u) | (uv[k][1] << v);
        if (side == 0) std::reverse(f.begin(), f.end());
        faces[static_cast<std::size_t>(2 * axis + side)] = f;
      }
    }

    for (int config = 0; config < 256; ++config) {
      auto inside = [&](int c) { return (config >> c) & 1; };
      std::array<int, 12> succ;
      succ.fill(-1);
      for (const auto& f : faces) {
        auto at = [&](int k) { return f[static_cast<std::size_t>(((k % 4) + 4) % 4)]; };
        for (int k = 0; k < 4; ++k) {
          if (!inside(at(k)) || inside(at(k + 1))) continue;
          int j = k;
          while (inside(at(j - 1))) --j;
          succ[static_cast<std::size_t>(edge_index(at(k), at(k + 1)))] = edge_index(at(j - 1), at(j));
        }
      }
      std::array<bool, 12> seen{};
      for (int start = 0; start < 12; ++start) {
        if (succ[static_cast<std::size_t>(start)] < 0 || seen[static_cast<std::size_t>(start)]) continue;
        std::vector<int> loop;
        for (int cur = start; !seen[static_cast<std::size_t>(cur)]; cur = succ[static_cast<std::size_t>(cur)]) {
          seen[static_cast<std::size_t>(cur)] = true;
          loop.push_back(cur);
        }
        for (std::size_t i = 1; i + 1 < loop.size(); ++i)
          triangles[static_cast<std::size_t>(config)].push_back({loop[0], loop[i], loop[i + 1]});
      }
    }

    // Fix the winding so normals point away from inside corners, using the
    // single-corner case as the reference.
    const auto& t = triangles[1].front();
    auto mid = [&](int edge) -> Vec3 {
      const auto& [a, b] = edges[static_cast<std::size_t>(edge)];
      return 0.5 * (corner(a) + corner(b));
    };
    const Vec3 n = (mid(t[1]) - mid(t[0])).cross(mid(t[2]) - mid(t[0]));
    if (n.dot(Vec3::Ones()) < 0.0)
      for (auto& list : triangles)
        for (auto& tri : list) std::swap(tri[1], tri[2]);
  }

  int edge_index(int a, int b) const {
    if (a > b) std::swap(a, b);
    for (int e = 0; e < 12; ++e)
      if (edges[static_cast<std::size_t>(e)][0] == a && edges[static_cast<std::size_t>(e)][1] == b) return e;
    return -1;
  }

  static Vec3 corner(int c) { return Vec3(c & 1, (c >> 1) & 1, (c >> 2) & 1); }
};

const CaseTable& table() {
  static const CaseTable t;
  return t;
}

struct Grid {
  Aabb box;
  Eigen::Index n;  // nodes per axis
  Vec3 h;

  Eigen::Index node(Eigen::Index i, Eigen::Index j, Eigen::Index k) const { return (i * n + j) * n + k; }
  Vec3 position(Eigen::Index idx) const {
    const Eigen::Index k = idx % n, j = (idx / n) % n, i = idx / (n * n);
    return box.lo + Vec3(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)).cwiseProduct(h);
  }
};

void check_grid(const Aabb& box, int resolution) {
  require(resolution >= 8, ErrorCode::InvalidArgument, "marching cubes: resolution must be >= 8");
  require((box.extent().array() > 0.0).all(), ErrorCode::InvalidArgument, "marching cubes: box has no volume");
}

Vec3 face_normal(const TriangleMesh& m, Eigen::Index t) {
  const Vec3 a = m.vertices.col(m.triangles(0, t)), b = m.vertices.col(m.triangles(1, t)),
             c = m.vertices.col(m.triangles(2, t));
  return (b - a).cross(c - a);
}

}  // namespace

const std::vector<std::array<int, 3>>& marching_cubes_case(int config) {
  require(config >= 0 && config < 256, ErrorCode::InvalidArgument, "marching cubes: case out of range");
  return table().triangles[static_cast<std::size_t>(config)];
}

std::array<int, 2> marching_cubes_edge(int e) {
  require(e >= 0 && e < 12, ErrorCode::InvalidArgument, "marching cubes: edge out of range");
  return table().edges[static_cast<std::size_t>(e)];
}

TriangleMesh marching_cubes(const Eigen::VectorXd& values, const Aabb& box, int resolution, double iso) {
  check_grid(box, resolution);
  const Grid grid{box, resolution + 1, box.extent() / resolution};
  require(values.size() == grid.n * grid.n * grid.n, ErrorCode::ShapeMismatch,
          "marching cubes: node value count does not match the resolution");
  require(values.allFinite(), ErrorCode::NonFinite, "marching cubes: non-finite field values");
  const CaseTable& tab = table();

  // Triangles as global edge keys (lower node * 3 + axis), one list per x slab.
  std::vector<std::vector<std::array<Eigen::Index, 3>>> slabs(static_cast<std::size_t>(resolution));
  parallel_for(static_cast<std::size_t>(resolution), [&](std::size_t s0, std::size_t s1) {
    for (std::size_t s = s0; s < s1; ++s) {
      const auto i = static_cast<Eigen::Index>(s);
      auto& out = slabs[s];
      for (Eigen::Index j = 0; j < resolution; ++j)
        for (Eigen::Index k = 0; k < resolution; ++k) {
          std::array<Eigen::Index, 8> nodes{};
          int config = 0;
          for (int c = 0; c < 8; ++c) {
            nodes[static_cast<std::size_t>(c)] = grid.node(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
            if (values[nodes[static_cast<std::size_t>(c)]] < iso) config |= 1 << c;
          }
          for (const auto& tri : tab.triangles[static_cast<std::size_t>(config)]) {
            std::array<Eigen::Index, 3> keys{};
            for (int v = 0; v < 3; ++v) {
              const auto& [a, b] = tab.edges[static_cast<std::size_t>(tri[static_cast<std::size_t>(v)])];
              const int axis = (a ^ b) == 1 ? 0 : ((a ^ b) == 2 ? 1 : 2);
              keys[static_cast<std::size_t>(v)] = nodes[static_cast<std::size_t>(a)] * 3 + axis;
            }
            out.push_back(keys);
          }
        }
    }
  });

  std::vector<Eigen::Index> keys;
  for (const auto& s : slabs)
    for (const auto& t : s) keys.insert(keys.end(), t.begin(), t.end());
  require(!keys.empty(), ErrorCode::EmptyLevelSet, "empty level set: the field never crosses the iso value");
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  Points vertices(3, static_cast<Eigen::Index>(keys.size()));
  const Eigen::Index step[3] = {grid.n * grid.n, grid.n, 1};
  for (std::size_t v = 0; v < keys.size(); ++v) {
    const Eigen::Index a = keys[v] / 3, b = a + step[keys[v] % 3];
    const double fa = values[a], fb = values[b];
    const double t = std::clamp((iso - fa) / (fb - fa), 0.0, 1.0);
    vertices.col(static_cast<Eigen::Index>(v)) = grid.position(a) + t * (grid.position(b) - grid.position(a));
  }

  auto lookup = [&](Eigen::Index key) {
    return static_cast<int>(std::lower_bound(keys.begin(), keys.end(), key) - keys.begin());
  };
  std::vector<Eigen::Vector3i> tris;
  for (const auto& s : slabs)
    for (const auto& t : s) {
      const Eigen::Vector3i tri(lookup(t[0]), lookup(t[1]), lookup(t[2]));
      const Vec3 a = vertices.col(tri[0]), b = vertices.col(tri[1]), c = vertices.col(tri[2]);
      if (0.5 * (b - a).cross(c - a).norm() >= 1e-12) tris.push_back(tri);
    }
  require(!tris.empty(), ErrorCode::EmptyLevelSet, "empty level set: only degenerate triangles");

  // Drop vertices only referenced by degenerate triangles.
  std::vector<int> remap(keys.size(), -1);
  int used = 0;
  for (const auto& t : tris)
    for (int v = 0; v < 3; ++v)
      if (remap[static_cast<std::size_t>(t[v])] < 0) remap[static_cast<std::size_t>(t[v])] = 0;
  for (auto& r : remap)
    if (r == 0) r = used++;

  TriangleMesh mesh;
  mesh.vertices.resize(3, used);
  for (std::size_t v = 0; v < remap.size(); ++v)
    if (remap[v] >= 0) mesh.vertices.col(remap[v]) = vertices.col(static_cast<Eigen::Index>(v));
  mesh.triangles.resize(3, static_cast<Eigen::Index>(tris.size()));
  for (std::size_t t = 0; t < tris.size(); ++t)
    for (int v = 0; v < 3; ++v)
      mesh.triangles(v, static_cast<Eigen::Index>(t)) = remap[static_cast<std::size_t>(tris[t][v])];

  mesh.normals = Points::Zero(3, used);
  for (Eigen::Index t = 0; t < mesh.triangle_count(); ++t) {
    const Vec3 n = face_normal(mesh, t);
    for (int v = 0; v < 3; ++v) mesh.normals.col(mesh.triangles(v, t)) += n;
  }
  for (Eigen::Index v = 0; v < used; ++v) {
    const double len = mesh.normals.col(v).norm();
    mesh.normals.col(v) = len > 0.0 ? Vec3(mesh.normals.col(v) / len) : Vec3::UnitZ();
  }
  return mesh;
}

TriangleMesh marching_cubes(const ImplicitField& field, const Aabb& box, int resolution, double iso) {
  check_grid(box, resolution);
  const Grid grid{box, resolution + 1, box.extent() / resolution};
  const Eigen::Index slab = grid.n * grid.n;
  Eigen::VectorXd values(slab * grid.n);
  parallel_for(static_cast<std::size_t>(grid.n), [&](std::size_t s0, std::size_t s1) {
    for (std::size_t s = s0; s < s1; ++s) {
      const Eigen::Index base = static_cast<Eigen::Index>(s) * slab;
      Points pts(3, slab);
      for (Eigen::Index q = 0; q < slab; ++q) pts.col(q) = grid.position(base + q);
      values.segment(base, slab) = field.values(pts);
    }
  });
  TriangleMesh mesh = marching_cubes(values, box, resolution, iso);

  Eigen::VectorXd f;
  Points J;
  field.evaluate(mesh.vertices, f, J);
  for (Eigen::Index v = 0; v < mesh.vertex_count(); ++v) {
    const double len = J.col(v).norm();
    if (len > 0.0 && std::isfinite(len)) mesh.normals.col(v) = J.col(v) / len;
  }
  return mesh;
}

}  // namespace sartomo
