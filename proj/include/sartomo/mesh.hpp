#pragma once

#include "sartomo/common.hpp"
#include "sartomo/field.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace sartomo {

struct TriangleMesh {
  Points vertices;
  Eigen::Matrix3Xi triangles;  // counter-clockwise seen from the positive side
  Points normals;              // per vertex, unit

  Eigen::Index vertex_count() const { return vertices.cols(); }
  Eigen::Index triangle_count() const { return triangles.cols(); }

  void validate() const;
  double area() const;
  /// Every undirected edge is shared by exactly two triangles.
  bool is_watertight() const;
  /// V - E + F.
  Eigen::Index euler_characteristic() const;
  /// Area-uniform surface samples.
  Points sample(Eigen::Index count, std::uint64_t seed) const;
};

/// Marching cubes over `resolution` cells per axis spanning `box`. Vertices
/// sit on linearly interpolated crossings of `iso`; normals are normalized
/// field gradients (face normals where the gradient vanishes). Throws
/// EmptyLevelSet when no cell edge changes sign.
TriangleMesh marching_cubes(const ImplicitField& field, const Aabb& box, int resolution, double iso = 0.0);

/// Same, on precomputed node values (x slowest, z fastest, (res+1)^3 nodes).
TriangleMesh marching_cubes(const Eigen::VectorXd& node_values, const Aabb& box, int resolution, double iso = 0.0);

/// Triangle list of one cube configuration: edge index triples. Corner c sits
/// at (c & 1, (c >> 1) & 1, (c >> 2) & 1); a corner is inside when its value
/// is below the iso level.
const std::vector<std::array<int, 3>>& marching_cubes_case(int config);
/// Corner pair of cube edge e.
std::array<int, 2> marching_cubes_edge(int e);

/// 0.5 * (mean_a min_b |a - b| + mean_b min_a |a - b|).
double chamfer(const Points& a, const Points& b);
/// Chamfer between area-uniform mesh samples (as many as `b` has points) and `b`.
double chamfer(const TriangleMesh& mesh, const Points& b, std::uint64_t seed = 0);

void write_mesh_ply(const std::filesystem::path& path, const TriangleMesh& mesh);
void write_mesh_obj(const std::filesystem::path& path, const TriangleMesh& mesh);
TriangleMesh read_mesh_ply(const std::filesystem::path& path);

}  // namespace sartomo
