#include "sartomo/voxel.hpp"

#include "sartomo/container.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace sartomo {

std::optional<Eigen::Index> VoxelGrid::locate(const Vec3& p) const {
  Eigen::Array3i idx;
  for (int a = 0; a < 3; ++a) {
    const double t = std::round((p[a] - origin[a]) / spacing[a]);
    if (t < 0.0 || t >= dims[a]) return std::nullopt;
    idx[a] = static_cast<int>(t);
  }
  return index(idx[0], idx[1], idx[2]);
}

Aabb VoxelGrid::bounds() const {
  const Vec3 half = 0.5 * spacing;
  return {origin - half, center(Eigen::Array3i(dims - 1)) + half};
}

void VoxelGrid::validate() const {
  require((dims > 0).all(), ErrorCode::InvalidArgument, "voxel grid dims must be positive");
  require((spacing.array() > 0.0).all() && spacing.allFinite(), ErrorCode::InvalidArgument,
          "voxel spacing must be positive");
  require(spacing.maxCoeff() / spacing.minCoeff() <= 1.5, ErrorCode::InvalidArgument,
          "voxels must be cube-like (spacing ratio <= 1.5)");
  require(origin.allFinite(), ErrorCode::InvalidArgument, "voxel origin must be finite");
}

VoxelGrid VoxelGrid::covering(const Aabb& box, double spacing) {
  require(spacing > 0.0, ErrorCode::InvalidArgument, "voxel spacing must be positive");
  VoxelGrid g;
  g.spacing = Vec3::Constant(spacing);
  const Vec3 ext = box.extent();
  for (int a = 0; a < 3; ++a) g.dims[a] = std::max(1, static_cast<int>(std::ceil(ext[a] / spacing - 1e-9)) + 1);
  g.origin = box.center() - 0.5 * spacing * (g.dims - 1).cast<double>().matrix();
  return g;
}

void to_json(nlohmann::json& j, const VoxelGrid& g) {
  j = {{"origin", {g.origin.x(), g.origin.y(), g.origin.z()}},
       {"spacing", {g.spacing.x(), g.spacing.y(), g.spacing.z()}},
       {"dims", {g.dims[0], g.dims[1], g.dims[2]}}};
}

void from_json(const nlohmann::json& j, VoxelGrid& g) {
  for (int a = 0; a < 3; ++a) {
    g.origin[a] = j.at("origin")[a].get<double>();
    g.spacing[a] = j.at("spacing")[a].get<double>();
    g.dims[a] = j.at("dims")[a].get<int>();
  }
  g.validate();
}

void save_subaperture_image(const std::filesystem::path& path, const SubApertureImage& img) {
  nlohmann::json header{{"kind", "voxels"},
                        {"complex", true},
                        {"grid", img.grid},
                        {"subaperture", img.m},
                        {"mean_azimuth", img.mean_azimuth},
                        {"mean_elevation", img.mean_elevation}};
  const auto* raw = reinterpret_cast<const double*>(img.values.data());
  write_container(path, std::move(header), {raw, static_cast<std::size_t>(2 * img.values.size())});
}

SubApertureImage load_subaperture_image(const std::filesystem::path& path) {
  auto c = read_container(path, "voxels");
  require(c.header.value("complex", false), ErrorCode::Io, path.string() + " does not hold a complex volume");
  SubApertureImage img;
  img.grid = c.header.at("grid").get<VoxelGrid>();
  img.m = c.header.at("subaperture").get<int>();
  img.mean_azimuth = c.header.at("mean_azimuth").get<double>();
  img.mean_elevation = c.header.at("mean_elevation").get<double>();
  require(c.payload.size() == static_cast<std::size_t>(2 * img.grid.size()), ErrorCode::ShapeMismatch,
          "voxel payload size disagrees with grid: " + path.string());
  img.values.resize(img.grid.size());
  std::copy(c.payload.begin(), c.payload.end(), reinterpret_cast<double*>(img.values.data()));
  return img;
}

void save_fused_image(const std::filesystem::path& path, const FusedImage& img) {
  nlohmann::json header{{"kind", "voxels"}, {"complex", false}, {"grid", img.grid}};
  write_container(path, std::move(header), {img.values.data(), static_cast<std::size_t>(img.values.size())});
}

FusedImage load_fused_image(const std::filesystem::path& path) {
  auto c = read_container(path, "voxels");
  require(!c.header.value("complex", true), ErrorCode::Io, path.string() + " does not hold a fused volume");
  FusedImage img;
  img.grid = c.header.at("grid").get<VoxelGrid>();
  require(c.payload.size() == static_cast<std::size_t>(img.grid.size()), ErrorCode::ShapeMismatch,
          "voxel payload size disagrees with grid: " + path.string());
  img.values = Eigen::Map<const Eigen::VectorXd>(c.payload.data(), img.grid.size());
  return img;
}

void save_subaperture_images(const std::filesystem::path& dir, const std::vector<SubApertureImage>& images) {
  std::filesystem::create_directories(dir);
  for (const auto& img : images) {
    char name[32];
    std::snprintf(name, sizeof(name), "subap_%04d.vox", img.m);
    save_subaperture_image(dir / name, img);
  }
}

std::vector<SubApertureImage> load_subaperture_images(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), ErrorCode::MissingArtifact,
          "sub-aperture directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".vox") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<SubApertureImage> images;
  for (const auto& f : files) images.push_back(load_subaperture_image(f));
  std::sort(images.begin(), images.end(), [](const auto& a, const auto& b) { return a.m < b.m; });
  return images;
}

}  // namespace sartomo
