#pragma once

#include "sartomo/common.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace sartomo {

/// Ground-truth surface of a simulated scene. Signed distance is negative
/// inside the solid.
class Surface {
 public:
  virtual ~Surface() = default;

  virtual double signed_distance(const Vec3& p) const = 0;
  /// Uniform-by-area sample: (point, outward unit normal).
  virtual std::pair<Vec3, Vec3> sample(Rng& rng) const = 0;
  virtual Aabb bounds() const = 0;
  virtual double area() const = 0;
  virtual nlohmann::json to_json() const = 0;

  /// Outward unit normal at (or near) p; central differences of the SDF.
  virtual Vec3 normal(const Vec3& p) const;
};

using SurfacePtr = std::shared_ptr<const Surface>;

class SphereSurface final : public Surface {
 public:
  SphereSurface(Vec3 center, double radius);
  double signed_distance(const Vec3& p) const override { return (p - center_).norm() - radius_; }
  std::pair<Vec3, Vec3> sample(Rng& rng) const override;
  Aabb bounds() const override;
  double area() const override { return 4.0 * kPi * radius_ * radius_; }
  nlohmann::json to_json() const override;
  Vec3 normal(const Vec3& p) const override;

  const Vec3& center() const { return center_; }
  double radius() const { return radius_; }

 private:
  Vec3 center_;
  double radius_;
};

class BoxSurface final : public Surface {
 public:
  BoxSurface(Vec3 center, Vec3 half_extents);
  double signed_distance(const Vec3& p) const override;
  std::pair<Vec3, Vec3> sample(Rng& rng) const override;
  Aabb bounds() const override { return {center_ - half_, center_ + half_}; }
  double area() const override;
  nlohmann::json to_json() const override;

  const Vec3& center() const { return center_; }
  const Vec3& half_extents() const { return half_; }

 private:
  Vec3 center_;
  Vec3 half_;
};

/// Capped cylinder with its axis along z.
class CylinderSurface final : public Surface {
 public:
  CylinderSurface(Vec3 center, double radius, double half_height);
  double signed_distance(const Vec3& p) const override;
  std::pair<Vec3, Vec3> sample(Rng& rng) const override;
  Aabb bounds() const override;
  double area() const override;
  nlohmann::json to_json() const override;

 private:
  Vec3 center_;
  double radius_;
  double half_height_;
};

/// Closed triangle mesh. Inside/outside from the generalized winding number.
class MeshSurface final : public Surface {
 public:
  MeshSurface(std::vector<Vec3> vertices, std::vector<Eigen::Vector3i> triangles, std::string name = "mesh");
  double signed_distance(const Vec3& p) const override;
  std::pair<Vec3, Vec3> sample(Rng& rng) const override;
  Aabb bounds() const override;
  double area() const override { return total_area_; }
  nlohmann::json to_json() const override;

  double winding_number(const Vec3& p) const;
  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Eigen::Vector3i>& triangles() const { return triangles_; }

 private:
  std::vector<Vec3> vertices_;
  std::vector<Eigen::Vector3i> triangles_;
  std::vector<double> cumulative_area_;
  double total_area_ = 0.0;
  std::string name_;
};

/// Low-poly car stand-in: a side profile extruded across the vehicle width.
std::shared_ptr<MeshSurface> make_vehicle_proxy(double scale = 1.0);

/// Closest point on triangle (a, b, c) to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Builds a surface from its JSON description, e.g.
/// {"type": "sphere", "center": [0, 0, 0], "radius": 1}.
SurfacePtr make_surface(const nlohmann::json& spec);

}  // namespace sartomo
