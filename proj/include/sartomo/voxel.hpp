#pragma once

#include "sartomo/common.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <filesystem>
#include <optional>
#include <vector>

namespace sartomo {

/// Regular voxel lattice. `origin` is the center of voxel (0, 0, 0); linear
/// indices are row-major in (x, y, z), z fastest.
struct VoxelGrid {
  Vec3 origin = Vec3::Zero();
  Vec3 spacing = Vec3::Ones();
  Eigen::Array3i dims = Eigen::Array3i::Ones();

  Eigen::Index size() const { return static_cast<Eigen::Index>(dims[0]) * dims[1] * dims[2]; }
  Eigen::Index index(int ix, int iy, int iz) const {
    return (static_cast<Eigen::Index>(ix) * dims[1] + iy) * dims[2] + iz;
  }
  Eigen::Array3i unravel(Eigen::Index v) const {
    const int iz = static_cast<int>(v % dims[2]);
    const Eigen::Index r = v / dims[2];
    return {static_cast<int>(r / dims[1]), static_cast<int>(r % dims[1]), iz};
  }
  Vec3 center(const Eigen::Array3i& idx) const { return origin + spacing.cwiseProduct(idx.cast<double>().matrix()); }
  Vec3 center(Eigen::Index v) const { return center(unravel(v)); }
  /// Voxel containing p, or nullopt outside the lattice.
  std::optional<Eigen::Index> locate(const Vec3& p) const;
  Aabb bounds() const;

  void validate() const;
  bool operator==(const VoxelGrid& o) const {
    return origin == o.origin && spacing == o.spacing && (dims == o.dims).all();
  }

  /// Smallest cube-voxel lattice of the given spacing covering `box`, centered on it.
  static VoxelGrid covering(const Aabb& box, double spacing);
};

void to_json(nlohmann::json& j, const VoxelGrid& g);
void from_json(const nlohmann::json& j, VoxelGrid& g);

/// Complex scattering volume S_m of one sub-aperture.
struct SubApertureImage {
  int m = 0;
  VoxelGrid grid;
  Eigen::VectorXcd values;
  double mean_azimuth = 0.0;    // radians, carried for view-direction lookup
  double mean_elevation = 0.0;  // radians
};

/// Non-coherently fused magnitude volume.
struct FusedImage {
  VoxelGrid grid;
  Eigen::VectorXd values;
};

void save_subaperture_image(const std::filesystem::path& path, const SubApertureImage& img);
SubApertureImage load_subaperture_image(const std::filesystem::path& path);
void save_fused_image(const std::filesystem::path& path, const FusedImage& img);
FusedImage load_fused_image(const std::filesystem::path& path);

/// Writes one `.vox` per image into `dir` (created if needed) as subap_NNNN.vox.
void save_subaperture_images(const std::filesystem::path& dir, const std::vector<SubApertureImage>& images);
std::vector<SubApertureImage> load_subaperture_images(const std::filesystem::path& dir);

}  // namespace sartomo
