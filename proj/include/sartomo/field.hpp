#pragma once

#include "sartomo/common.hpp"
#include "sartomo/surface.hpp"

namespace sartomo {

/// Differentiable scalar field: anything the iso-point sampler, mesher and
/// validator can query. Analytic fields stand in for trained networks in tests.
class ImplicitField {
 public:
  virtual ~ImplicitField() = default;

  /// Values f(p) and spatial gradients df/dp, one column per point.
  virtual void evaluate(const Points& points, Eigen::VectorXd& values, Points& gradients) const = 0;
  /// Values only; defaults to evaluate().
  virtual Eigen::VectorXd values(const Points& points) const;

  double value(const Vec3& p) const;
  Vec3 gradient(const Vec3& p) const;
};

class SphereField final : public ImplicitField {
 public:
  SphereField(Vec3 center, double radius) : center_(std::move(center)), radius_(radius) {}
  void evaluate(const Points& points, Eigen::VectorXd& values, Points& gradients) const override;

 private:
  Vec3 center_;
  double radius_;
};

/// f(p) = <n, p> - offset with unit n.
class PlaneField final : public ImplicitField {
 public:
  PlaneField(Vec3 normal, double offset) : normal_(normal.normalized()), offset_(offset) {}
  void evaluate(const Points& points, Eigen::VectorXd& values, Points& gradients) const override;

 private:
  Vec3 normal_;
  double offset_;
};

/// Exact box SDF with its (piecewise) analytic gradient.
class BoxField final : public ImplicitField {
 public:
  BoxField(Vec3 center, Vec3 half_extents) : center_(std::move(center)), half_(std::move(half_extents)) {}
  void evaluate(const Points& points, Eigen::VectorXd& values, Points& gradients) const override;

 private:
  Vec3 center_;
  Vec3 half_;
};

/// Signed distance of a ground-truth Surface, gradient by central differences.
class SurfaceField final : public ImplicitField {
 public:
  explicit SurfaceField(SurfacePtr surface) : surface_(std::move(surface)) {}
  void evaluate(const Points& points, Eigen::VectorXd& values, Points& gradients) const override;
  Eigen::VectorXd values(const Points& points) const override;

 private:
  SurfacePtr surface_;
};

}  // namespace sartomo
