#include "sartomo/surface.hpp"

#include <algorithm>
#include <cmath>

namespace sartomo {

namespace {

Vec3 vec3_from_json(const nlohmann::json& j, const char* key) {
  require(j.contains(key) && j.at(key).is_array() && j.at(key).size() == 3, ErrorCode::InvalidArgument,
          std::string("surface spec: '") + key + "' must be a 3-vector");
  return {j.at(key)[0].get<double>(), j.at(key)[1].get<double>(), j.at(key)[2].get<double>()};
}

double positive(const nlohmann::json& j, const char* key) {
  require(j.contains(key) && j.at(key).is_number(), ErrorCode::InvalidArgument,
          std::string("surface spec: missing '") + key + "'");
  const double v = j.at(key).get<double>();
  require(v > 0.0 && std::isfinite(v), ErrorCode::InvalidArgument,
          std::string("surface spec: '") + key + "' must be positive");
  return v;
}

nlohmann::json to_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

Vec3 random_unit(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (;;) {
    Vec3 v(g(rng), g(rng), g(rng));
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

}  // namespace

Vec3 Surface::normal(const Vec3& p) const {
  const double h = 1e-6 * std::max(1.0, bounds().diagonal());
  Vec3 g;
  for (int k = 0; k < 3; ++k) {
    Vec3 e = Vec3::Zero();
    e[k] = h;
    g[k] = signed_distance(p + e) - signed_distance(p - e);
  }
  const double n = g.norm();
  return n > 0.0 ? Vec3(g / n) : Vec3::UnitZ();
}

// ---------------------------------------------------------------- sphere

SphereSurface::SphereSurface(Vec3 center, double radius) : center_(std::move(center)), radius_(radius) {
  require(radius > 0.0, ErrorCode::InvalidArgument, "sphere radius must be positive");
}

std::pair<Vec3, Vec3> SphereSurface::sample(Rng& rng) const {
  const Vec3 n = random_unit(rng);
  return {center_ + radius_ * n, n};
}

Aabb SphereSurface::bounds() const {
  const Vec3 r = Vec3::Constant(radius_);
  return {center_ - r, center_ + r};
}

nlohmann::json SphereSurface::to_json() const {
  return {{"type", "sphere"}, {"center", sartomo::to_json(center_)}, {"radius", radius_}};
}

Vec3 SphereSurface::normal(const Vec3& p) const {
  const Vec3 d = p - center_;
  const double n = d.norm();
  return n > 0.0 ? Vec3(d / n) : Vec3::UnitZ();
}

// ---------------------------------------------------------------- box

BoxSurface::BoxSurface(Vec3 center, Vec3 half_extents) : center_(std::move(center)), half_(std::move(half_extents)) {
  require((half_.array() > 0.0).all(), ErrorCode::InvalidArgument, "box half extents must be positive");
}

double BoxSurface::signed_distance(const Vec3& p) const {
  const Vec3 q = (p - center_).cwiseAbs() - half_;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

double BoxSurface::area() const {
  return 8.0 * (half_.x() * half_.y() + half_.y() * half_.z() + half_.z() * half_.x());
}

std::pair<Vec3, Vec3> BoxSurface::sample(Rng& rng) const {
  // Face pairs normal to x, y, z have areas 4*hy*hz, 4*hz*hx, 4*hx*hy each.
  const double ax = half_.y() * half_.z(), ay = half_.z() * half_.x(), az = half_.x() * half_.y();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng) * (ax + ay + az);
  const int axis = r < ax ? 0 : (r < ax + ay ? 1 : 2);
  const double sign = u(rng) < 0.5 ? -1.0 : 1.0;
  Vec3 local;
  for (int k = 0; k < 3; ++k) local[k] = (2.0 * u(rng) - 1.0) * half_[k];
  local[axis] = sign * half_[axis];
  Vec3 n = Vec3::Zero();
  n[axis] = sign;
  return {center_ + local, n};
}

nlohmann::json BoxSurface::to_json() const {
  return {{"type", "box"}, {"center", sartomo::to_json(center_)}, {"half_extents", sartomo::to_json(half_)}};
}

// ---------------------------------------------------------------- cylinder

CylinderSurface::CylinderSurface(Vec3 center, double radius, double half_height)
    : center_(std::move(center)), radius_(radius), half_height_(half_height) {
  require(radius > 0.0 && half_height > 0.0, ErrorCode::InvalidArgument, "cylinder dimensions must be positive");
}

double CylinderSurface::signed_distance(const Vec3& p) const {
  const Vec3 d = p - center_;
  const double dr = std::hypot(d.x(), d.y()) - radius_;
  const double dz = std::abs(d.z()) - half_height_;
  const double outside = std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
  return outside + std::min(std::max(dr, dz), 0.0);
}

double CylinderSurface::area() const {
  return 2.0 * kPi * radius_ * (2.0 * half_height_) + 2.0 * kPi * radius_ * radius_;
}

std::pair<Vec3, Vec3> CylinderSurface::sample(Rng& rng) const {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double side = 2.0 * kPi * radius_ * 2.0 * half_height_;
  const double cap = kPi * radius_ * radius_;
  const double r = u(rng) * (side + 2.0 * cap);
  const double phi = 2.0 * kPi * u(rng);
  if (r < side) {
    const double z = (2.0 * u(rng) - 1.0) * half_height_;
    const Vec3 n(std::cos(phi), std::sin(phi), 0.0);
    return {center_ + Vec3(radius_ * n.x(), radius_ * n.y(), z), n};
  }
  const double sign = r < side + cap ? 1.0 : -1.0;
  const double rho = radius_ * std::sqrt(u(rng));
  return {center_ + Vec3(rho * std::cos(phi), rho * std::sin(phi), sign * half_height_), Vec3(0, 0, sign)};
}

Aabb CylinderSurface::bounds() const {
  const Vec3 h(radius_, radius_, half_height_);
  return {center_ - h, center_ + h};
}

nlohmann::json CylinderSurface::to_json() const {
  return {{"type", "cylinder"}, {"center", sartomo::to_json(center_)}, {"radius", radius_},
          {"half_height", half_height_}};
}

// ---------------------------------------------------------------- mesh

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Voronoi-region walk over vertices, edges and the face.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

MeshSurface::MeshSurface(std::vector<Vec3> vertices, std::vector<Eigen::Vector3i> triangles, std::string name)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)), name_(std::move(name)) {
  require(!triangles_.empty(), ErrorCode::InvalidArgument, "mesh surface needs triangles");
  const int nv = static_cast<int>(vertices_.size());
  cumulative_area_.reserve(triangles_.size());
  for (const auto& t : triangles_) {
    require(t.minCoeff() >= 0 && t.maxCoeff() < nv, ErrorCode::InvalidArgument, "mesh triangle index out of range");
    const Vec3& a = vertices_[t[0]];
    total_area_ += 0.5 * (vertices_[t[1]] - a).cross(vertices_[t[2]] - a).norm();
    cumulative_area_.push_back(total_area_);
  }
  require(total_area_ > 0.0, ErrorCode::InvalidArgument, "mesh surface has zero area");
}

double MeshSurface::winding_number(const Vec3& p) const {
  // Sum of signed solid angles (Van Oosterom & Strackee).
  double total = 0.0;
  for (const auto& t : triangles_) {
    const Vec3 a = vertices_[t[0]] - p, b = vertices_[t[1]] - p, c = vertices_[t[2]] - p;
    const double la = a.norm(), lb = b.norm(), lc = c.norm();
    const double num = a.dot(b.cross(c));
    const double den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
    total += 2.0 * std::atan2(num, den);
  }
  return total / (4.0 * kPi);
}

double MeshSurface::signed_distance(const Vec3& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : triangles_) {
    const Vec3 q = closest_point_on_triangle(p, vertices_[t[0]], vertices_[t[1]], vertices_[t[2]]);
    best = std::min(best, (q - p).squaredNorm());
  }
  const double d = std::sqrt(best);
  return winding_number(p) > 0.5 ? -d : d;
}

std::pair<Vec3, Vec3> MeshSurface::sample(Rng& rng) const {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng) * total_area_;
  const auto it = std::lower_bound(cumulative_area_.begin(), cumulative_area_.end(), r);
  const auto& t = triangles_[std::min<std::size_t>(it - cumulative_area_.begin(), triangles_.size() - 1)];
  double s = u(rng), w = u(rng);
  if (s + w > 1.0) {
    s = 1.0 - s;
    w = 1.0 - w;
  }
  const Vec3& a = vertices_[t[0]];
  const Vec3 ab = vertices_[t[1]] - a, ac = vertices_[t[2]] - a;
  return {a + s * ab + w * ac, ab.cross(ac).normalized()};
}

Aabb MeshSurface::bounds() const {
  Aabb box{vertices_.front(), vertices_.front()};
  for (const auto& v : vertices_) {
    box.lo = box.lo.cwiseMin(v);
    box.hi = box.hi.cwiseMax(v);
  }
  return box;
}

nlohmann::json MeshSurface::to_json() const {
  nlohmann::json verts = nlohmann::json::array(), tris = nlohmann::json::array();
  for (const auto& v : vertices_) verts.push_back(sartomo::to_json(v));
  for (const auto& t : triangles_) tris.push_back({t[0], t[1], t[2]});
  return {{"type", "mesh"}, {"name", name_}, {"vertices", verts}, {"triangles", tris}};
}

std::shared_ptr<MeshSurface> make_vehicle_proxy(double scale) {
  // Side profile in the x-z plane, counter-clockwise seen from +y.
  const std::vector<Eigen::Vector2d> profile = {
      {-2.2, 0.30}, {2.2, 0.30}, {2.2, 0.85}, {1.3, 0.95}, {0.6, 1.45}, {-0.9, 1.45}, {-1.7, 0.95}, {-2.2, 0.90},
  };
  const double half_width = 0.9;
  const int n = static_cast<int>(profile.size());
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& q : profile) centroid += q;
  centroid /= n;
  const double z_shift = -0.85;  // centers the body vertically about z = 0

  std::vector<Vec3> v;
  for (double y : {half_width, -half_width}) {
    for (const auto& q : profile) v.emplace_back(scale * q.x(), scale * y, scale * (q.y() + z_shift));
    v.emplace_back(scale * centroid.x(), scale * y, scale * (centroid.y() + z_shift));
  }
  const int front_c = n, back0 = n + 1, back_c = 2 * n + 1;
  std::vector<Eigen::Vector3i> t;
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    // Cap at +y: outward normal +y. Profile is CCW seen from +y when x right, z up
    // means normal (x cross z) = -y, so wind the fan reversed.
    t.emplace_back(front_c, j, i);
    t.emplace_back(back_c, back0 + i, back0 + j);
    // Side quad between profile edge i->j on both caps.
    t.emplace_back(i, j, back0 + j);
    t.emplace_back(i, back0 + j, back0 + i);
  }
  return std::make_shared<MeshSurface>(std::move(v), std::move(t), "vehicle_proxy");
}

SurfacePtr make_surface(const nlohmann::json& spec) {
  require(spec.is_object() && spec.contains("type"), ErrorCode::InvalidArgument, "surface spec needs a 'type'");
  const auto type = spec.at("type").get<std::string>();
  if (type == "sphere") return std::make_shared<SphereSurface>(vec3_from_json(spec, "center"), positive(spec, "radius"));
  if (type == "box")
    return std::make_shared<BoxSurface>(vec3_from_json(spec, "center"), vec3_from_json(spec, "half_extents"));
  if (type == "cylinder")
    return std::make_shared<CylinderSurface>(vec3_from_json(spec, "center"), positive(spec, "radius"),
                                             positive(spec, "half_height"));
  if (type == "vehicle_proxy") return make_vehicle_proxy(spec.contains("scale") ? positive(spec, "scale") : 1.0);
  if (type == "mesh") {
    std::vector<Vec3> verts;
    std::vector<Eigen::Vector3i> tris;
    for (const auto& v : spec.at("vertices")) verts.emplace_back(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
    for (const auto& t : spec.at("triangles")) tris.emplace_back(t[0].get<int>(), t[1].get<int>(), t[2].get<int>());
    return std::make_shared<MeshSurface>(std::move(verts), std::move(tris), spec.value("name", std::string("mesh")));
  }
  throw Error(ErrorCode::InvalidArgument, "unknown surface type '" + type + "'");
}

}  // namespace sartomo
