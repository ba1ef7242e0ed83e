#pragma once

#include "sartomo/inversion.hpp"
#include "sartomo/pointcloud.hpp"
#include "sartomo/scene.hpp"
#include "sartomo/sdf_network.hpp"
#include "sartomo/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace sartomo {

inline constexpr int kPipelineSchemaVersion = 1;

struct SceneSpec {
  nlohmann::json surface = {{"type", "sphere"}, {"center", {0, 0, 0}}, {"radius", 2.0}};
  int scatterers = 400;
  CoeffModel coeff_model = CoeffModel::Persistence;
  double noise_sigma = 0.0;
};

struct GridSpec {
  double spacing = 0.0;   // m; 0 selects the range resolution c / (2B)
  double padding = 0.2;   // fraction of the surface bbox added around it
};

struct InversionSpec {
  Regularization reg;
  int iters = 100;
  OperatorMode mode = OperatorMode::Auto;
};

struct CloudSpec {
  Threshold threshold = Threshold::quantile(0.98);
  double normal_radius = kDefaultNormalRadius;
};

struct MeshSpec {
  int resolution = 128;
};

struct ValidationSpec {
  int samples = 2000;
};

/// Everything one end-to-end run needs. All randomness derives from `seed`.
struct PipelineConfig {
  std::string name = "run";
  std::uint64_t seed = 0;
  SceneSpec scene;
  GeometryConfig geometry;
  GridSpec grid;
  InversionSpec inversion;
  CloudSpec cloud;
  NetworkConfig network;
  TrainConfig train;
  LossWeights loss;
  MeshSpec mesh;
  ValidationSpec validation;

  void validate() const;
};

/// Parses a versioned config. "schema_version" and "seed" are mandatory,
/// unknown keys anywhere are rejected, and a "sweep" block is not allowed here
/// (see expand_sweep).
PipelineConfig parse_pipeline_config(const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& c);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Expands an optional "sweep" block of dotted-path value lists, e.g.
/// {"network.num_frequencies": [6, 9], "train.iso_enabled": [false, true]},
/// into concrete configs in row-major order (last key fastest). Each entry
/// carries a label such as "network.num_frequencies=6,train.iso_enabled=false".
std::vector<std::pair<std::string, nlohmann::json>> expand_sweep(const nlohmann::json& j);

/// Sets the value at a dotted path; every segment but the last must exist.
void set_dotted(nlohmann::json& j, const std::string& path, const nlohmann::json& value);

/// Flattens nested objects to dotted keys.
nlohmann::json flatten_json(const nlohmann::json& j);

}  // namespace sartomo
