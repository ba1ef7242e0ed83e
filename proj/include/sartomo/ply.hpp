#pragma once

#include "sartomo/pointcloud.hpp"

#include <filesystem>

namespace sartomo {

/// ASCII PLY with vertex properties x y z nx ny nz magnitude vx vy vz.
void write_point_cloud_ply(const std::filesystem::path& path, const OrientedPointCloud& cloud);

/// Reads an ASCII PLY point cloud. Missing normals/view directions fall back
/// to each other (or +z); a missing magnitude reads as 1.
OrientedPointCloud read_point_cloud_ply(const std::filesystem::path& path);

/// ASCII PLY with positions and normals only.
void write_oriented_points_ply(const std::filesystem::path& path, const Points& points, const Points& normals);

}  // namespace sartomo
