#pragma once

#include "sartomo/nufft.hpp"
#include "sartomo/scene.hpp"
#include "sartomo/voxel.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace sartomo {

enum class OperatorMode {
  Direct,  // exact separable sum over voxels
  Fast,    // Kaiser-Bessel gridding + FFT
  Auto,    // cheaper of the two by operation count
};

OperatorMode operator_mode_from_string(const std::string& name);

/// Linear map from a voxel image to the phase-history samples of one
/// sub-aperture. Samples are ordered pulse-major: s = p * N_F + i, with p
/// enumerating CollectionGeometry::members(m).
class SubApertureOperator {
 public:
  SubApertureOperator(const CollectionGeometry& geometry, const VoxelGrid& grid, int m,
                      OperatorMode mode = OperatorMode::Auto);

  Eigen::Index num_samples() const { return wavevectors_.cols(); }
  Eigen::Index num_voxels() const { return grid_.size(); }
  OperatorMode mode() const { return mode_; }
  const VoxelGrid& grid() const { return grid_; }
  /// Two-way wavevector (4 pi f / c) * look per sample, rad/m.
  const Eigen::Matrix3Xd& wavevectors() const { return wavevectors_; }

  Eigen::VectorXcd forward(const Eigen::VectorXcd& image) const;
  Eigen::VectorXcd adjoint(const Eigen::VectorXcd& samples) const;

 private:
  Eigen::VectorXcd forward_direct(const Eigen::VectorXcd& image) const;
  Eigen::VectorXcd adjoint_direct(const Eigen::VectorXcd& samples) const;

  VoxelGrid grid_;
  OperatorMode mode_;
  Eigen::Matrix3Xd wavevectors_;
  Eigen::VectorXcd origin_phase_;  // exp(-j k . origin) per sample
  // Per-axis phase tables exp(-j omega_a n), dims[a] x num_samples.
  Eigen::MatrixXcd ex_, ey_, ez_;
  std::unique_ptr<GriddingTransform> gridding_;
};

/// Samples of sub-aperture m in SubApertureOperator order.
Eigen::VectorXcd extract_subaperture(const PhaseHistory& ph, int m);

/// F_m(S_m): predicted samples of sub-aperture m for image `img`.
Eigen::VectorXcd forward_operator(const SubApertureImage& img, const CollectionGeometry& geometry, int m,
                                  OperatorMode mode = OperatorMode::Auto);
/// F_m^H applied to sub-aperture samples.
SubApertureImage adjoint_operator(const Eigen::VectorXcd& samples, const CollectionGeometry& geometry,
                                  const VoxelGrid& grid, int m, OperatorMode mode = OperatorMode::Auto);

/// Complex soft threshold: shrinks magnitudes by `t`, keeps phases.
Eigen::VectorXcd soft_threshold(const Eigen::VectorXcd& v, double t);

struct Regularization {
  enum class Kind {
    Relative,     // lambda = value * ||F^H y||_inf
    Absolute,     // lambda = value
    Discrepancy,  // value = sigma^2, residual energy target
  };
  Kind kind = Kind::Relative;
  double value = 0.05;
};

struct SolverOptions {
  Regularization reg;
  int max_iters = 200;
  double rel_tol = 1e-6;
  OperatorMode mode = OperatorMode::Auto;
  int power_iters = 30;
  int max_bisection_steps = 12;
};

struct SolveReport {
  double lambda = 0.0;
  double lambda_max = 0.0;     // ||F^H y||_inf
  double residual_sq = 0.0;    // ||y - F x||^2 at the returned solution
  int iterations = 0;          // of the final FISTA run
  int restarts = 0;
  int bisection_steps = 0;
  std::vector<double> objective;  // per iteration of the final run
};

/// min_x 0.5 ||y - F x||^2 + lambda ||x||_1 by FISTA with objective-based
/// restarts, for one sub-aperture.
SubApertureImage solve_subaperture(const PhaseHistory& ph, const VoxelGrid& grid, int m,
                                   const SolverOptions& options, SolveReport* report = nullptr);

/// Same solver on an explicit operator and sample vector.
Eigen::VectorXcd solve_l1(const SubApertureOperator& op, const Eigen::VectorXcd& y, const SolverOptions& options,
                          SolveReport* report = nullptr);

/// S = sum_m |S_m|.
FusedImage fuse_noncoherent(const std::vector<SubApertureImage>& images);

/// Default voxel spacing c / (2 B) for the collection's bandwidth.
double range_resolution(const CollectionGeometry& geometry);

}  // namespace sartomo
