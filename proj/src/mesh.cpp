#include "sartomo/mesh.hpp"

#include "sartomo/kdtree.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace sartomo {

void TriangleMesh::validate() const {
  require(normals.cols() == vertices.cols(), ErrorCode::ShapeMismatch, "mesh: one normal per vertex required");
  if (triangles.size() > 0)
    require(triangles.minCoeff() >= 0 && triangles.maxCoeff() < vertices.cols(), ErrorCode::ShapeMismatch,
            "mesh: triangle index out of range");
  require(vertices.allFinite(), ErrorCode::NonFinite, "mesh: non-finite vertex");
}

double TriangleMesh::area() const {
  double a = 0.0;
  for (Eigen::Index t = 0; t < triangle_count(); ++t) {
    const Vec3 p = vertices.col(triangles(0, t)), q = vertices.col(triangles(1, t)), r = vertices.col(triangles(2, t));
    a += 0.5 * (q - p).cross(r - p).norm();
  }
  return a;
}

namespace {

std::map<std::pair<int, int>, int> edge_counts(const TriangleMesh& m) {
  std::map<std::pair<int, int>, int> count;
  for (Eigen::Index t = 0; t < m.triangle_count(); ++t)
    for (int k = 0; k < 3; ++k) {
      int a = m.triangles(k, t), b = m.triangles((k + 1) % 3, t);
      if (a > b) std::swap(a, b);
      ++count[{a, b}];
    }
  return count;
}

}  // namespace

bool TriangleMesh::is_watertight() const {
  if (triangle_count() == 0) return false;
  for (const auto& [edge, n] : edge_counts(*this))
    if (n != 2) return false;
  return true;
}

Eigen::Index TriangleMesh::euler_characteristic() const {
  return vertex_count() - static_cast<Eigen::Index>(edge_counts(*this).size()) + triangle_count();
}

Points TriangleMesh::sample(Eigen::Index count, std::uint64_t seed) const {
  require(triangle_count() > 0, ErrorCode::EmptyLevelSet, "cannot sample an empty mesh");
  std::vector<double> cumulative(static_cast<std::size_t>(triangle_count()));
  double total = 0.0;
  for (Eigen::Index t = 0; t < triangle_count(); ++t) {
    const Vec3 p = vertices.col(triangles(0, t)), q = vertices.col(triangles(1, t)), r = vertices.col(triangles(2, t));
    total += 0.5 * (q - p).cross(r - p).norm();
    cumulative[static_cast<std::size_t>(t)] = total;
  }
  Rng rng(derive_seed(seed, 6));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Points out(3, count);
  for (Eigen::Index i = 0; i < count; ++i) {
    const double x = u(rng) * total;
    const auto t = static_cast<Eigen::Index>(
        std::min<std::ptrdiff_t>(std::lower_bound(cumulative.begin(), cumulative.end(), x) - cumulative.begin(),
                                 static_cast<std::ptrdiff_t>(cumulative.size()) - 1));
    const double s = std::sqrt(u(rng)), w = u(rng);
    const Vec3 p = vertices.col(triangles(0, t)), q = vertices.col(triangles(1, t)), r = vertices.col(triangles(2, t));
    out.col(i) = (1 - s) * p + s * (1 - w) * q + s * w * r;
  }
  return out;
}

namespace {

double mean_nearest(const Points& from, const KdTree& to) {
  Eigen::VectorXd d(from.cols());
  parallel_for(static_cast<std::size_t>(from.cols()), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      d[k] = to.nearest(from.col(k)).second;
    }
  });
  return d.mean();
}

}  // namespace

double chamfer(const Points& a, const Points& b) {
  require(a.cols() > 0 && b.cols() > 0, ErrorCode::EmptyPointCloud, "chamfer: both point sets must be non-empty");
  return 0.5 * (mean_nearest(a, KdTree(b)) + mean_nearest(b, KdTree(a)));
}

double chamfer(const TriangleMesh& mesh, const Points& b, std::uint64_t seed) {
  require(b.cols() > 0, ErrorCode::EmptyPointCloud, "chamfer: reference point set is empty");
  return chamfer(mesh.sample(b.cols(), seed), b);
}

void write_mesh_ply(const std::filesystem::path& path, const TriangleMesh& mesh) {
  mesh.validate();
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot open for writing: " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << mesh.vertex_count() << "\n";
  for (const char* p : {"x", "y", "z", "nx", "ny", "nz"}) out << "property double " << p << "\n";
  out << "element face " << mesh.triangle_count() << "\nproperty list uchar int vertex_indices\nend_header\n"
      << std::setprecision(17);
  for (Eigen::Index i = 0; i < mesh.vertex_count(); ++i)
    out << mesh.vertices(0, i) << ' ' << mesh.vertices(1, i) << ' ' << mesh.vertices(2, i) << ' '
        << mesh.normals(0, i) << ' ' << mesh.normals(1, i) << ' ' << mesh.normals(2, i) << '\n';
  for (Eigen::Index t = 0; t < mesh.triangle_count(); ++t)
    out << "3 " << mesh.triangles(0, t) << ' ' << mesh.triangles(1, t) << ' ' << mesh.triangles(2, t) << '\n';
  require(static_cast<bool>(out), ErrorCode::Io, "write failed: " + path.string());
}

void write_mesh_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  mesh.validate();
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot open for writing: " + path.string());
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < mesh.vertex_count(); ++i)
    out << "v " << mesh.vertices(0, i) << ' ' << mesh.vertices(1, i) << ' ' << mesh.vertices(2, i) << '\n';
  for (Eigen::Index i = 0; i < mesh.vertex_count(); ++i)
    out << "vn " << mesh.normals(0, i) << ' ' << mesh.normals(1, i) << ' ' << mesh.normals(2, i) << '\n';
  for (Eigen::Index t = 0; t < mesh.triangle_count(); ++t) {
    out << 'f';
    for (int k = 0; k < 3; ++k) out << ' ' << mesh.triangles(k, t) + 1 << "//" << mesh.triangles(k, t) + 1;
    out << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::Io, "write failed: " + path.string());
}

TriangleMesh read_mesh_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open: " + path.string());
  std::string line;
  std::getline(in, line);
  require(line.rfind("ply", 0) == 0, ErrorCode::Io, "not a PLY file: " + path.string());
  Eigen::Index nv = -1, nf = 0;
  int ncols = 0;
  std::map<std::string, int> column;
  std::string element;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      require(fmt == "ascii", ErrorCode::Io, "only ASCII PLY is supported: " + path.string());
    } else if (word == "element") {
      ls >> element;
      if (element == "vertex") ls >> nv;
      else if (element == "face") ls >> nf;
    } else if (word == "property" && element == "vertex") {
      std::string type, name;
      ls >> type >> name;
      column[name] = ncols++;
    } else if (word == "end_header") {
      break;
    }
  }
  require(nv >= 0 && column.count("x") && column.count("y") && column.count("z"), ErrorCode::Io,
          "PLY lacks vertex positions: " + path.string());
  const bool has_normals = column.count("nx") && column.count("ny") && column.count("nz");
  TriangleMesh mesh;
  mesh.vertices.resize(3, nv);
  mesh.normals = Points::Zero(3, nv);
  std::vector<double> row(static_cast<std::size_t>(ncols));
  for (Eigen::Index i = 0; i < nv; ++i) {
    for (auto& x : row) in >> x;
    auto at = [&](const char* n) { return row[static_cast<std::size_t>(column.at(n))]; };
    mesh.vertices.col(i) = Vec3(at("x"), at("y"), at("z"));
    if (has_normals) mesh.normals.col(i) = Vec3(at("nx"), at("ny"), at("nz"));
  }
  mesh.triangles.resize(3, nf);
  for (Eigen::Index t = 0; t < nf; ++t) {
    int k = 0;
    in >> k;
    require(k == 3, ErrorCode::Io, "only triangle faces are supported: " + path.string());
    in >> mesh.triangles(0, t) >> mesh.triangles(1, t) >> mesh.triangles(2, t);
  }
  require(static_cast<bool>(in), ErrorCode::Io, "truncated PLY body: " + path.string());
  mesh.validate();
  return mesh;
}

}  // namespace sartomo
