#include "sartomo/ply.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace sartomo {

void write_point_cloud_ply(const std::filesystem::path& path, const OrientedPointCloud& cloud) {
  cloud.validate();
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot open for writing: " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size() << "\n";
  for (const char* p : {"x", "y", "z", "nx", "ny", "nz", "magnitude", "vx", "vy", "vz"})
    out << "property double " << p << "\n";
  out << "end_header\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const auto p = cloud.points.col(i), n = cloud.normals.col(i), v = cloud.view_dirs.col(i);
    out << p.x() << ' ' << p.y() << ' ' << p.z() << ' ' << n.x() << ' ' << n.y() << ' ' << n.z() << ' '
        << cloud.magnitudes[i] << ' ' << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::Io, "write failed: " + path.string());
}

OrientedPointCloud read_point_cloud_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open: " + path.string());
  std::string line;
  std::getline(in, line);
  require(line.rfind("ply", 0) == 0, ErrorCode::Io, "not a PLY file: " + path.string());
  Eigen::Index count = -1;
  std::map<std::string, int> column;
  int ncols = 0;
  bool in_vertex = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      require(fmt == "ascii", ErrorCode::Io, "only ASCII PLY is supported: " + path.string());
    } else if (word == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex) ls >> count;
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      column[name] = ncols++;
    } else if (word == "end_header") {
      break;
    }
  }
  require(count >= 0 && column.count("x") && column.count("y") && column.count("z"), ErrorCode::Io,
          "PLY lacks vertex positions: " + path.string());
  auto has = [&](std::initializer_list<const char*> names) {
    for (const char* n : names)
      if (!column.count(n)) return false;
    return true;
  };
  const bool normals = has({"nx", "ny", "nz"}), views = has({"vx", "vy", "vz"}), mags = has({"magnitude"});

  OrientedPointCloud c;
  c.points.resize(3, count);
  c.normals.resize(3, count);
  c.view_dirs.resize(3, count);
  c.magnitudes.resize(count);
  std::vector<double> row(static_cast<std::size_t>(ncols));
  for (Eigen::Index i = 0; i < count; ++i) {
    for (auto& x : row) in >> x;
    require(static_cast<bool>(in), ErrorCode::Io, "truncated PLY body: " + path.string());
    auto at = [&](const char* n) { return row[static_cast<std::size_t>(column.at(n))]; };
    c.points.col(i) = Vec3(at("x"), at("y"), at("z"));
    const Vec3 n = normals ? Vec3(at("nx"), at("ny"), at("nz")) : Vec3::Zero();
    const Vec3 v = views ? Vec3(at("vx"), at("vy"), at("vz")) : Vec3::Zero();
    const Vec3 nn = n.norm() > 0.0 ? n.normalized() : (v.norm() > 0.0 ? v.normalized() : Vec3::UnitZ());
    c.normals.col(i) = nn;
    c.view_dirs.col(i) = v.norm() > 0.0 ? v.normalized() : nn;
    c.magnitudes[i] = mags ? at("magnitude") : 1.0;
  }
  c.validate();
  return c;
}

void write_oriented_points_ply(const std::filesystem::path& path, const Points& points, const Points& normals) {
  require(points.cols() == normals.cols(), ErrorCode::ShapeMismatch, "points and normals differ in count");
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot open for writing: " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << points.cols() << "\n";
  for (const char* p : {"x", "y", "z", "nx", "ny", "nz"}) out << "property double " << p << "\n";
  out << "end_header\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < points.cols(); ++i)
    out << points(0, i) << ' ' << points(1, i) << ' ' << points(2, i) << ' ' << normals(0, i) << ' '
        << normals(1, i) << ' ' << normals(2, i) << '\n';
}

}  // namespace sartomo
