#pragma once

#include "sartomo/common.hpp"

#include <Eigen/Core>

#include <vector>

namespace sartomo {

/// Kaiser-Bessel window I0(beta sqrt(1 - (t/w)^2)) on |t| <= w.
double kaiser_bessel(double t, double half_width, double beta);

/// Continuous Fourier transform of kaiser_bessel at frequency nu (cycles per
/// unit of t).
double kaiser_bessel_ft(double nu, double half_width, double beta);

/// Non-uniform transform between a 3D lattice and arbitrary frequencies:
///
///   forward:  y_s = sum_n x[n] exp(-j omega_s . n),  n in [0, dims)
///   adjoint:  x[n] = sum_s y_s exp(+j omega_s . n)
///
/// computed by Kaiser-Bessel gridding onto an oversampled Cartesian grid and
/// FFTs. The adjoint is the exact transpose of the approximate forward, so
/// dot tests hold to rounding error.
class GriddingTransform {
 public:
  GriddingTransform(Eigen::Array3i dims, const Eigen::Matrix3Xd& omega, int oversampling = 2, int half_width = 3);

  Eigen::VectorXcd forward(const Eigen::VectorXcd& x) const;
  Eigen::VectorXcd adjoint(const Eigen::VectorXcd& y) const;

  Eigen::Index num_samples() const { return static_cast<Eigen::Index>(phase_.size()); }
  const Eigen::Array3i& oversampled_dims() const { return grid_; }

 private:
  void fft_axis(std::vector<cdouble>& g, int axis, bool inverse) const;
  std::size_t grid_index(int a, int b, int c) const {
    return (static_cast<std::size_t>(a) * grid_[1] + b) * grid_[2] + c;
  }

  Eigen::Array3i dims_;
  Eigen::Array3i grid_;
  Eigen::Array3i shift_;  // centering offset per axis
  int taps_;
  std::vector<Eigen::ArrayXd> deconv_;  // per axis, indexed by lattice position
  std::vector<std::vector<int>> valid_; // per axis, grid rows holding lattice data
  // Per sample: first tap index per axis and taps_ weights per axis.
  Eigen::Matrix3Xi first_tap_;
  std::vector<double> weights_;
  std::vector<cdouble> phase_;
};

}  // namespace sartomo
