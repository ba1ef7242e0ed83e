#include "sartomo/field.hpp"

namespace sartomo {

Eigen::VectorXd ImplicitField::values(const Points& points) const {
  Eigen::VectorXd v;
  Points g;
  evaluate(points, v, g);
  return v;
}

double ImplicitField::value(const Vec3& p) const { return values(Points(p))[0]; }

Vec3 ImplicitField::gradient(const Vec3& p) const {
  Eigen::VectorXd v;
  Points g;
  evaluate(Points(p), v, g);
  return g.col(0);
}

void SphereField::evaluate(const Points& points, Eigen::VectorXd& values, Points& gradients) const {
  values.resize(points.cols());
  gradients.resize(3, points.cols());
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    const Vec3 d = points.col(i) - center_;
    const double r = d.norm();
    values[i] = r - radius_;
    gradients.col(i) = r > 0.0 ? Vec3(d / r) : Vec3::UnitZ();
  }
}

void PlaneField::evaluate(const Points& points, Eigen::VectorXd& values, Points& gradients) const {
  values = (normal_.transpose() * points).transpose().array() - offset_;
  gradients = normal_.replicate(1, points.cols());
}

void BoxField::evaluate(const Points& points, Eigen::VectorXd& values, Points& gradients) const {
  values.resize(points.cols());
  gradients.resize(3, points.cols());
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    const Vec3 d = points.col(i) - center_;
    const Vec3 q = d.cwiseAbs() - half_;
    const Vec3 sign = d.unaryExpr([](double x) { return x < 0.0 ? -1.0 : 1.0; });
    if (q.maxCoeff() > 0.0) {
      const Vec3 outside = q.cwiseMax(0.0);
      const double r = outside.norm();
      values[i] = r;
      gradients.col(i) = sign.cwiseProduct(outside / r);
    } else {
      int axis;
      values[i] = q.maxCoeff(&axis);
      Vec3 g = Vec3::Zero();
      g[axis] = sign[axis];
      gradients.col(i) = g;
    }
  }
}

void SurfaceField::evaluate(const Points& points, Eigen::VectorXd& values, Points& gradients) const {
  values.resize(points.cols());
  gradients.resize(3, points.cols());
  const double h = 1e-6 * std::max(1.0, surface_->bounds().diagonal());
  parallel_for(static_cast<std::size_t>(points.cols()), [&](std::size_t b, std::size_t e) {
    for (auto i = static_cast<Eigen::Index>(b); i < static_cast<Eigen::Index>(e); ++i) {
      const Vec3 p = points.col(i);
      values[i] = surface_->signed_distance(p);
      for (int k = 0; k < 3; ++k) {
        Vec3 step = Vec3::Zero();
        step[k] = h;
        gradients(k, i) = (surface_->signed_distance(p + step) - surface_->signed_distance(p - step)) / (2.0 * h);
      }
    }
  });
}

Eigen::VectorXd SurfaceField::values(const Points& points) const {
  Eigen::VectorXd v(points.cols());
  parallel_for(static_cast<std::size_t>(points.cols()), [&](std::size_t b, std::size_t e) {
    for (auto i = static_cast<Eigen::Index>(b); i < static_cast<Eigen::Index>(e); ++i)
      v[i] = surface_->signed_distance(points.col(i));
  });
  return v;
}

}  // namespace sartomo
