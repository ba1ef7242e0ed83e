#include "sartomo/config.hpp"

#include <fstream>
#include <set>

namespace sartomo {

namespace {

using nlohmann::json;

void only_keys(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  require(j.is_object(), ErrorCode::Config, section + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    require(ok.count(key) > 0, ErrorCode::Config, section + ": unknown key '" + key + "'");
}

const char* mode_name(OperatorMode m) {
  switch (m) {
    case OperatorMode::Direct: return "direct";
    case OperatorMode::Fast: return "fast";
    case OperatorMode::Auto: return "auto";
  }
  return "auto";
}

const char* reg_name(Regularization::Kind k) {
  switch (k) {
    case Regularization::Kind::Relative: return "relative";
    case Regularization::Kind::Absolute: return "absolute";
    case Regularization::Kind::Discrepancy: return "discrepancy";
  }
  return "relative";
}

Regularization::Kind reg_from_name(const std::string& s) {
  if (s == "relative") return Regularization::Kind::Relative;
  if (s == "absolute") return Regularization::Kind::Absolute;
  if (s == "discrepancy") return Regularization::Kind::Discrepancy;
  throw Error(ErrorCode::Config, "inversion: unknown regularization kind '" + s + "'");
}

}  // namespace

void PipelineConfig::validate() const {
  require(!name.empty(), ErrorCode::Config, "name must not be empty");
  require(scene.scatterers >= 1, ErrorCode::Config, "scene.scatterers must be >= 1");
  require(scene.noise_sigma >= 0.0, ErrorCode::Config, "scene.noise_sigma must be >= 0");
  make_surface(scene.surface);
  make_geometry(geometry);
  require(grid.spacing >= 0.0 && grid.padding >= 0.0, ErrorCode::Config, "grid: spacing and padding must be >= 0");
  require(inversion.iters >= 1, ErrorCode::Config, "inversion.iters must be >= 1");
  require(inversion.reg.value > 0.0, ErrorCode::Config, "inversion: regularization value must be positive");
  require(cloud.normal_radius > 0.0, ErrorCode::Config, "cloud.normal_radius must be positive");
  if (cloud.threshold.kind == Threshold::Kind::Quantile)
    require(cloud.threshold.value > 0.0 && cloud.threshold.value < 1.0, ErrorCode::Config,
            "cloud: quantile must lie in (0, 1)");
  network.validate();
  train.validate();
  loss.validate();
  require(mesh.resolution >= 8, ErrorCode::Config, "mesh.resolution must be >= 8");
  require(validation.samples >= 10, ErrorCode::Config, "validation.samples must be >= 10");
}

PipelineConfig parse_pipeline_config(const json& j) {
  try {
    only_keys(j, "config",
              {"schema_version", "name", "seed", "scene", "geometry", "grid", "inversion", "cloud", "network", "train",
               "loss", "mesh", "validation"});
    require(j.contains("schema_version"), ErrorCode::Config, "config: missing schema_version");
    const int version = j.at("schema_version").get<int>();
    require(version == kPipelineSchemaVersion, ErrorCode::Config,
            "config: unsupported schema_version " + std::to_string(version));
    require(j.contains("seed"), ErrorCode::Config, "config: missing seed");

    PipelineConfig c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.name = j.value("name", c.name);
    if (j.contains("scene")) {
      const json& s = j.at("scene");
      only_keys(s, "scene", {"surface", "scatterers", "coeff_model", "noise_sigma"});
      c.scene.surface = s.value("surface", c.scene.surface);
      c.scene.scatterers = s.value("scatterers", c.scene.scatterers);
      if (s.contains("coeff_model")) c.scene.coeff_model = coeff_model_from_string(s.at("coeff_model"));
      c.scene.noise_sigma = s.value("noise_sigma", c.scene.noise_sigma);
    }
    if (j.contains("geometry")) c.geometry = j.at("geometry").get<GeometryConfig>();
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      only_keys(g, "grid", {"spacing", "padding"});
      c.grid.spacing = g.value("spacing", c.grid.spacing);
      c.grid.padding = g.value("padding", c.grid.padding);
    }
    if (j.contains("inversion")) {
      const json& v = j.at("inversion");
      only_keys(v, "inversion", {"regularization", "value", "iters", "mode"});
      if (v.contains("regularization")) c.inversion.reg.kind = reg_from_name(v.at("regularization"));
      c.inversion.reg.value = v.value("value", c.inversion.reg.value);
      c.inversion.iters = v.value("iters", c.inversion.iters);
      if (v.contains("mode")) c.inversion.mode = operator_mode_from_string(v.at("mode"));
    }
    if (j.contains("cloud")) {
      const json& v = j.at("cloud");
      only_keys(v, "cloud", {"quantile", "absolute", "normal_radius"});
      require(!(v.contains("quantile") && v.contains("absolute")), ErrorCode::Config,
              "cloud: give either quantile or absolute, not both");
      if (v.contains("quantile")) c.cloud.threshold = Threshold::quantile(v.at("quantile"));
      if (v.contains("absolute")) c.cloud.threshold = Threshold::absolute(v.at("absolute"));
      c.cloud.normal_radius = v.value("normal_radius", c.cloud.normal_radius);
    }
    if (j.contains("network")) c.network = j.at("network").get<NetworkConfig>();
    if (j.contains("train")) {
      require(!j.at("train").contains("seed"), ErrorCode::Config,
              "train.seed is derived from the top-level seed and may not be set");
      c.train = j.at("train").get<TrainConfig>();
    }
    if (j.contains("loss")) c.loss = j.at("loss").get<LossWeights>();
    if (j.contains("mesh")) {
      only_keys(j.at("mesh"), "mesh", {"resolution"});
      c.mesh.resolution = j.at("mesh").value("resolution", c.mesh.resolution);
    }
    if (j.contains("validation")) {
      only_keys(j.at("validation"), "validation", {"samples"});
      c.validation.samples = j.at("validation").value("samples", c.validation.samples);
    }
    c.train.seed = derive_seed(c.seed, 0x7472);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Config) throw;
    throw Error(ErrorCode::Config, e.what());
  }
}

json to_json(const PipelineConfig& c) {
  json train = c.train;
  train.erase("seed");
  json cloud = {{"normal_radius", c.cloud.normal_radius}};
  cloud[c.cloud.threshold.kind == Threshold::Kind::Quantile ? "quantile" : "absolute"] = c.cloud.threshold.value;
  return {{"schema_version", kPipelineSchemaVersion},
          {"name", c.name},
          {"seed", c.seed},
          {"scene",
           {{"surface", c.scene.surface},
            {"scatterers", c.scene.scatterers},
            {"coeff_model", c.scene.coeff_model == CoeffModel::Persistence ? "persistence" : "constant"},
            {"noise_sigma", c.scene.noise_sigma}}},
          {"geometry", c.geometry},
          {"grid", {{"spacing", c.grid.spacing}, {"padding", c.grid.padding}}},
          {"inversion",
           {{"regularization", reg_name(c.inversion.reg.kind)},
            {"value", c.inversion.reg.value},
            {"iters", c.inversion.iters},
            {"mode", mode_name(c.inversion.mode)}}},
          {"cloud", cloud},
          {"network", c.network},
          {"train", train},
          {"loss", c.loss},
          {"mesh", {{"resolution", c.mesh.resolution}}},
          {"validation", {{"samples", c.validation.samples}}}};
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open config: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, path.string() + ": " + e.what());
  }
  require(!j.contains("sweep"), ErrorCode::Config, path.string() + " holds a sweep; run it as a grid");
  return parse_pipeline_config(j);
}

void set_dotted(json& j, const std::string& path, const json& value) {
  json* node = &j;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    require(!key.empty(), ErrorCode::Config, "bad dotted path '" + path + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key)) (*node)[key] = json::object();
    node = &(*node)[key];
    require(node->is_object(), ErrorCode::Config, "dotted path '" + path + "' crosses a non-object");
    start = dot + 1;
  }
}

json flatten_json(const json& j) {
  json out = json::object();
  std::function<void(const json&, const std::string&)> walk = [&](const json& v, const std::string& prefix) {
    if (v.is_object() && !v.empty()) {
      for (const auto& [k, x] : v.items()) walk(x, prefix.empty() ? k : prefix + "." + k);
    } else {
      out[prefix] = v;
    }
  };
  walk(j, "");
  return out;
}

std::vector<std::pair<std::string, json>> expand_sweep(const json& j) {
  json base = j;
  if (!base.contains("sweep")) return {{"", base}};
  const json sweep = base.at("sweep");
  base.erase("sweep");
  require(sweep.is_object() && !sweep.empty(), ErrorCode::Config, "sweep must be a non-empty object");
  std::vector<std::pair<std::string, json>> axes;
  for (const auto& [k, v] : sweep.items()) {
    require(v.is_array() && !v.empty(), ErrorCode::Config, "sweep." + k + " must be a non-empty list");
    axes.emplace_back(k, v);
  }
  std::vector<std::pair<std::string, json>> out;
  std::vector<std::size_t> idx(axes.size(), 0);
  for (;;) {
    json c = base;
    std::string label;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const json& v = axes[a].second[idx[a]];
      set_dotted(c, axes[a].first, v);
      label += (a ? "," : "") + axes[a].first + "=" + v.dump();
    }
    out.emplace_back(label, std::move(c));
    std::size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++idx[a] < axes[a].second.size()) break;
      idx[a] = 0;
      if (a == 0) return out;
    }
  }
}

}  // namespace sartomo
