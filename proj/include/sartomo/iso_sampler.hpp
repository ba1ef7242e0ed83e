#pragma once

#include "sartomo/common.hpp"
#include "sartomo/field.hpp"

#include <filesystem>
#include <vector>

namespace sartomo {

/// Points on the zero-level set of a field, with unit normals J/||J||.
struct IsoPointSet {
  Points points;
  Points normals;
  Eigen::VectorXd residuals;  // |f(q)|

  Eigen::Index size() const { return points.cols(); }
};

struct SamplerParams {
  double tau0 = 0.1;           // max update length, m
  double epsilon = 0.1;        // neighborhood radius, m
  double sigma_p = 0.0707;     // density bandwidth, m
  double alpha = 0.5;          // repulsion step, in units of sigma_p
  int max_newton_iters = 10;
  double tolerance = 1e-4;     // |f| accepted as on-surface
  double uniform_box_fraction = 0.0;  // of seeds drawn uniformly in the box
  int uniform_iters = 1;       // repulsion passes per refresh
  bool edge_aware = true;
  Aabb box;                    // points leaving it are dropped

  void validate() const;
  /// tau0 = diag/20, epsilon = 2 x expected spacing for `target` points spread
  /// over the box surface, sigma_p = epsilon / sqrt(2).
  static SamplerParams defaults(const Aabb& box, int target);
};

/// (x / ||x||) min(||x||, tau0).
Vec3 clip_step(const Vec3& x, double tau0);

/// w = exp(-d^2 / sigma_p^2).
inline double density_weight(double distance, double sigma_p) {
  return std::exp(-(distance * distance) / (sigma_p * sigma_p));
}

enum class ProjectionStatus { Converged, NotConverged, DegenerateGradient };

struct ProjectionResult {
  Points points;
  std::vector<ProjectionStatus> status;
  std::vector<int> iterations;
  Eigen::VectorXd values;  // f at the returned points
  Points gradients;
};

/// Clipped Newton iterations q <- q - pi(J f / ||J||^2) until |f| <= tolerance.
ProjectionResult project_newton(const ImplicitField& field, const Points& starts, const SamplerParams& params);

/// Keeps converged points inside params.box; fills normals and residuals.
IsoPointSet project_to_iso(const ImplicitField& field, const Points& starts, const SamplerParams& params);

/// One repulsion pass q <- q - alpha sigma_p sum_i w_i u_i / max(1, sum_i w_i),
/// u_i the unit offset to neighbor i in the epsilon-ball, clipped, then
/// re-projected.
IsoPointSet resample_uniform(const IsoPointSet& iso, const ImplicitField& field, const SamplerParams& params);

struct EarOffsets {
  Points repulsion;  // 0.5 x Gaussian-weighted mean neighbor offset
  Points edge;       // mean neighbor offset weighted by exp(-n_i . (q_i - q) / sigma_p^2)
};

/// Per-point edge-aware offsets (zero for points without neighbors).
EarOffsets ear_offsets(const IsoPointSet& iso, const SamplerParams& params);

/// q <- q - pi(dq_repulsion) + pi(dq_edge), then re-projection. dq_edge is the
/// mean neighbor offset weighted by exp(-n_i . (q_i - q) / sigma_p^2);
/// dq_repulsion is half the Gaussian-weighted mean offset.
IsoPointSet resample_edge_aware(const IsoPointSet& iso, const ImplicitField& field, const SamplerParams& params);

/// Inserts (q_i* + 2 q*) / 3 at the highest-priority points until `target`
/// points or no point has a neighbor. Insertions go in rounds of at most a
/// quarter of the current count, re-projected after each round.
IsoPointSet upsample(const IsoPointSet& iso, const ImplicitField& field, const SamplerParams& params, int target);

/// Seeds around `seeds` (Gaussian, std epsilon/2) plus uniform box samples,
/// projection, uniform and edge-aware resampling, upsampling to `target`.
IsoPointSet refresh_iso_points(const ImplicitField& field, const Points& seeds, const SamplerParams& params,
                               int target, std::uint64_t seed);

/// Nearest-neighbor distance of every point (0 for a lone point).
Eigen::VectorXd nearest_neighbor_distances(const Points& points);

void write_iso_points_ply(const std::filesystem::path& path, const IsoPointSet& iso);

}  // namespace sartomo
