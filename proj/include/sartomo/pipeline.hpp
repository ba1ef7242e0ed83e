#pragma once

#include "sartomo/config.hpp"
#include "sartomo/mesh.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace sartomo {

/// Artifact locations inside one run directory.
struct RunPaths {
  std::filesystem::path dir;

  std::filesystem::path config() const { return dir / "config.json"; }
  std::filesystem::path phase_history() const { return dir / "scene.ph"; }
  std::filesystem::path subapertures() const { return dir / "subapertures"; }
  std::filesystem::path fused() const { return dir / "fused.vox"; }
  std::filesystem::path cloud() const { return dir / "cloud.ply"; }
  std::filesystem::path model() const { return dir / "model.sdfnet"; }
  std::filesystem::path best_model() const { return dir / "best.sdfnet"; }
  std::filesystem::path failed_model() const { return dir / "failed.sdfnet"; }
  std::filesystem::path history() const { return dir / "history.csv"; }
  std::filesystem::path iso_points() const { return dir / "isopoints.ply"; }
  std::filesystem::path mesh_ply() const { return dir / "mesh.ply"; }
  std::filesystem::path mesh_obj() const { return dir / "mesh.obj"; }
  std::filesystem::path metrics() const { return dir / "metrics.json"; }
};

using LogFn = std::function<void(const std::string&)>;

/// Independent random streams of a run, all derived from config.seed.
enum class SeedStream : std::uint64_t { Scene = 1, Noise, Network, Validation, MeshSamples };
std::uint64_t stream_seed(const PipelineConfig& config, SeedStream stream);

/// Ground-truth scene of a config: surface, geometry and scatterers.
Scene make_scene(const PipelineConfig& config);
/// Inversion grid: the surface bbox inflated by grid.padding at the configured
/// spacing (range resolution when 0).
VoxelGrid make_grid(const PipelineConfig& config, const Aabb& surface_bounds, const CollectionGeometry& geometry);
/// Per-sub-aperture L1 images in sub-aperture order.
std::vector<SubApertureImage> invert_all(const PhaseHistory& ph, const VoxelGrid& grid, const InversionSpec& spec,
                                         const LogFn& log = {});
/// Freshly initialized network for a cloud.
SdfNetwork<double> make_network(const PipelineConfig& config, const OrientedPointCloud& cloud);
/// Box used for mesh extraction and validation: the network's input domain
/// (its normalization cube).
Aabb network_domain(const SdfNetwork<double>& net);

struct RunOptions {
  bool resume = false;  // reuse artifacts already present in the run directory
  LogFn log;
};

/// simulate -> invert -> cloud -> train -> mesh -> validate, persisting every
/// artifact under `out`. Errors are rethrown with the stage name prefixed.
/// Returns the metrics written to metrics.json.
nlohmann::json run_pipeline(const PipelineConfig& config, const std::filesystem::path& out,
                            const RunOptions& options = {});

/// Runs every config of a (possibly sweeping) config document, each in its
/// own subdirectory of `out`, then writes the ablation report there.
std::vector<std::filesystem::path> run_grid(const nlohmann::json& document, const std::filesystem::path& out,
                                            const RunOptions& options = {});

/// Per-run metrics side by side, with the config keys that differ between
/// runs. Writes report.csv and report.json into `out` when it is non-empty.
nlohmann::json ablation_report(const std::vector<std::filesystem::path>& run_dirs,
                               const std::filesystem::path& out = {});

}  // namespace sartomo
