#include "sartomo/pipeline.hpp"

#include "sartomo/iso_sampler.hpp"
#include "sartomo/ply.hpp"

#include <fstream>
#include <iomanip>
#include <set>

namespace sartomo {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

template <typename F>
auto stage(const char* name, const RunOptions& options, F&& body) {
  if (options.log) options.log(std::string("[") + name + "]");
  try {
    return body();
  } catch (const Error& e) {
    throw Error(e.code(), std::string(name) + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::Io, std::string(name) + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + path.string());
  out << std::setw(2) << j << '\n';
  require(static_cast<bool>(out), ErrorCode::Io, "write failed: " + path.string());
}

json read_json(const fs::path& path) {
  require(fs::exists(path), ErrorCode::MissingArtifact, "missing file: " + path.string());
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, path.string() + ": " + e.what());
  }
}

json to_json(const LossTerms& t) {
  return {{"iso_sdf", t.iso_sdf}, {"iso_normal", t.iso_normal}, {"eikonal", t.eikonal}, {"on_sdf", t.on_sdf},
          {"normal", t.normal},   {"off_sdf", t.off_sdf},       {"total", t.total}};
}

// Quotes a CSV field when it holds separators.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

bool reuse(const RunOptions& o, const fs::path& p) { return o.resume && fs::exists(p); }

}  // namespace

std::uint64_t stream_seed(const PipelineConfig& config, SeedStream stream) {
  return derive_seed(config.seed, static_cast<std::uint64_t>(stream));
}

Scene make_scene(const PipelineConfig& config) {
  const CollectionGeometry geometry = make_geometry(config.geometry);
  return sample_scene(make_surface(config.scene.surface), config.scene.scatterers, config.scene.coeff_model, geometry,
                      stream_seed(config, SeedStream::Scene));
}

VoxelGrid make_grid(const PipelineConfig& config, const Aabb& surface_bounds, const CollectionGeometry& geometry) {
  const double spacing = config.grid.spacing > 0.0 ? config.grid.spacing : range_resolution(geometry);
  return VoxelGrid::covering(surface_bounds.inflated(config.grid.padding), spacing);
}

std::vector<SubApertureImage> invert_all(const PhaseHistory& ph, const VoxelGrid& grid, const InversionSpec& spec,
                                         const LogFn& log) {
  SolverOptions options;
  options.reg = spec.reg;
  options.max_iters = spec.iters;
  options.mode = spec.mode;
  const int count = ph.geometry.num_subapertures();
  std::vector<SubApertureImage> images;
  images.reserve(static_cast<std::size_t>(count));
  for (int m = 0; m < count; ++m) {
    images.push_back(solve_subaperture(ph, grid, m, options));
    if (log && ((m + 1) % 16 == 0 || m + 1 == count))
      log("  sub-aperture " + std::to_string(m + 1) + "/" + std::to_string(count));
  }
  return images;
}

SdfNetwork<double> make_network(const PipelineConfig& config, const OrientedPointCloud& cloud) {
  return SdfNetwork<double>(config.network, training_region(cloud, config.train.box_padding),
                            stream_seed(config, SeedStream::Network));
}

Aabb network_domain(const SdfNetwork<double>& net) {
  const Vec3 half = Vec3::Constant(net.scale());
  return {net.center() - half, net.center() + half};
}

json run_pipeline(const PipelineConfig& config, const fs::path& out, const RunOptions& options) {
  config.validate();
  const RunPaths paths{out};
  const json config_json = to_json(config);
  fs::create_directories(out);
  if (options.resume && fs::exists(paths.config())) {
    require(read_json(paths.config()) == config_json, ErrorCode::Config,
            "cannot resume: " + paths.config().string() + " holds a different config");
  }
  write_json(paths.config(), config_json);

  const Scene scene = stage("scene", options, [&] { return make_scene(config); });

  const PhaseHistory ph = stage("simulate", options, [&] {
    if (reuse(options, paths.phase_history())) return load_phase_history(paths.phase_history());
    const CollectionGeometry geometry = make_geometry(config.geometry);
    PhaseHistory p = simulate_phase_history(scene, geometry, config.scene.noise_sigma, stream_seed(config, SeedStream::Noise));
    save_phase_history(paths.phase_history(), p);
    return p;
  });

  const VoxelGrid grid = make_grid(config, scene.surface->bounds(), ph.geometry);
  struct Volumes {
    std::vector<SubApertureImage> images;
    FusedImage fused;
  };
  const Volumes volumes = stage("invert", options, [&] {
    if (reuse(options, paths.fused()) && fs::exists(paths.subapertures()))
      return Volumes{load_subaperture_images(paths.subapertures()), load_fused_image(paths.fused())};
    Volumes v;
    v.images = invert_all(ph, grid, config.inversion, options.log);
    v.fused = fuse_noncoherent(v.images);
    save_subaperture_images(paths.subapertures(), v.images);
    save_fused_image(paths.fused(), v.fused);
    return v;
  });

  const OrientedPointCloud cloud = stage("cloud", options, [&] {
    if (reuse(options, paths.cloud())) return read_point_cloud_ply(paths.cloud());
    OrientedPointCloud c =
        build_point_cloud(volumes.fused, volumes.images, config.cloud.threshold, config.cloud.normal_radius);
    write_point_cloud_ply(paths.cloud(), c);
    return c;
  });
  const Aabb region = training_region(cloud, config.train.box_padding);

  const fs::path summary_path = out / "train_summary.json";
  struct Trained {
    SdfNetwork<double> net;
    json summary;
  };
  const Trained trained = stage("train", options, [&] {
    if (reuse(options, paths.model()) && fs::exists(summary_path))
      return Trained{SdfNetwork<double>::load(paths.model()), read_json(summary_path)};
    TrainResult r = train(make_network(config, cloud), cloud, config.train, config.loss, paths.failed_model(),
                          [&](const HistoryRow& h) {
                            if (options.log && h.step % (config.train.log_every * 10) == 0)
                              options.log("  step " + std::to_string(h.step) + " loss " + std::to_string(h.terms.total));
                          });
    r.net.save(paths.model());
    SdfNetwork<double> best = r.net;
    best.params() = r.best;
    best.save(paths.best_model());
    write_history_csv(paths.history(), r.history);
    json summary = {{"final", to_json(r.history.back().terms)},
                    {"best_step", r.best_step},
                    {"best_loss", r.best_loss},
                    {"iso_refreshes", r.iso_refreshes},
                    {"iso_failures", r.iso_failures}};
    write_json(summary_path, summary);
    return Trained{std::move(r.net), summary};
  });
  const NetworkField field(trained.net);

  const TriangleMesh mesh = stage("mesh", options, [&] {
    if (reuse(options, paths.mesh_ply())) return read_mesh_ply(paths.mesh_ply());
    TriangleMesh m = marching_cubes(field, region, config.mesh.resolution);
    write_mesh_ply(paths.mesh_ply(), m);
    write_mesh_obj(paths.mesh_obj(), m);
    return m;
  });

  return stage("validate", options, [&] {
    const std::uint64_t vseed = stream_seed(config, SeedStream::Validation);
    IsoPointSet iso;
    const ValidationReport report =
        validate_field(field, *scene.surface, region, config.validation.samples, vseed,
                       [&](const Vec3& n) { return faces_any_subaperture(ph.geometry, n); }, &iso);
    write_iso_points_ply(paths.iso_points(), iso);
    Rng rng(stream_seed(config, SeedStream::MeshSamples));
    Points truth(3, config.validation.samples);
    for (Eigen::Index i = 0; i < truth.cols(); ++i) truth.col(i) = scene.surface->sample(rng).first;

    json metrics = {
        {"name", config.name},
        {"seed", config.seed},
        {"scene",
         {{"scatterers", scene.scatterers.size()},
          {"subapertures", ph.geometry.num_subapertures()},
          {"grid_dims", {grid.dims[0], grid.dims[1], grid.dims[2]}},
          {"voxel_spacing", grid.spacing.x()}}},
        {"cloud", {{"points", cloud.size()}}},
        {"train", trained.summary},
        {"validation", json(report)},
        {"mesh",
         {{"vertices", mesh.vertex_count()},
          {"triangles", mesh.triangle_count()},
          {"watertight", mesh.is_watertight()},
          {"area", mesh.area()},
          {"chamfer", chamfer(mesh, truth, derive_seed(stream_seed(config, SeedStream::MeshSamples), 1))}}},
    };
    write_json(paths.metrics(), metrics);
    return metrics;
  });
}

std::vector<fs::path> run_grid(const json& document, const fs::path& out, const RunOptions& options) {
  const auto configs = expand_sweep(document);
  std::vector<fs::path> dirs;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto& [label, j] = configs[i];
    PipelineConfig config = parse_pipeline_config(j);
    std::string dir = (i < 10 ? "0" : "") + std::to_string(i);
    if (!label.empty()) {
      config.name += "[" + label + "]";
      std::string safe;
      for (char c : label) safe += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '=' || c == '-') ? c : '_';
      dir += "_" + safe;
    }
    if (options.log) options.log("run " + std::to_string(i + 1) + "/" + std::to_string(configs.size()) + ": " + dir);
    run_pipeline(config, out / dir, options);
    dirs.push_back(out / dir);
  }
  if (dirs.size() >= 2) ablation_report(dirs, out);
  return dirs;
}

json ablation_report(const std::vector<fs::path>& run_dirs, const fs::path& out) {
  require(run_dirs.size() >= 2, ErrorCode::InvalidArgument, "report: need at least two run directories");
  std::vector<json> configs, metrics;
  for (const auto& d : run_dirs) {
    const RunPaths p{d};
    configs.push_back(flatten_json(read_json(p.config())));
    metrics.push_back(read_json(p.metrics()));
  }

  std::set<std::string> keys;
  for (const auto& c : configs)
    for (const auto& [k, _] : c.items()) keys.insert(k);
  keys.erase("name");
  std::vector<std::string> delta_keys;
  for (const auto& k : keys)
    for (const auto& c : configs)
      if (!c.contains(k) || c.at(k) != configs.front().value(k, json())) {
        delta_keys.push_back(k);
        break;
      }

  static const std::vector<std::pair<std::string, json::json_pointer>> columns = {
      {"chamfer", json::json_pointer("/validation/chamfer")},
      {"mesh_chamfer", json::json_pointer("/mesh/chamfer")},
      {"on_surface_rms", json::json_pointer("/validation/on_surface_rms")},
      {"on_surface_rms_all", json::json_pointer("/validation/on_surface_rms_all")},
      {"eikonal_mean", json::json_pointer("/validation/eikonal_mean")},
      {"normal_rms_deg", json::json_pointer("/validation/normal_rms_deg")},
  };
  json rows = json::array();
  for (std::size_t r = 0; r < run_dirs.size(); ++r) {
    json row = {{"run", run_dirs[r].filename().string()}, {"name", metrics[r].value("name", "")}};
    json deltas = json::object();
    for (const auto& k : delta_keys) deltas[k] = configs[r].value(k, json());
    row["config_deltas"] = deltas;
    json vs_first = json::object();
    for (const auto& [name, ptr] : columns) {
      require(metrics[r].contains(ptr), ErrorCode::MissingArtifact,
              "report: " + RunPaths{run_dirs[r]}.metrics().string() + " lacks " + ptr.to_string());
      row[name] = metrics[r].at(ptr);
      vs_first[name] = metrics[r].at(ptr).get<double>() - metrics.front().at(ptr).get<double>();
    }
    row["delta_vs_first"] = vs_first;
    rows.push_back(row);
  }
  json report = {{"delta_keys", delta_keys}, {"runs", rows}};

  if (!out.empty()) {
    fs::create_directories(out);
    write_json(out / "report.json", report);
    std::ofstream csv(out / "report.csv");
    require(static_cast<bool>(csv), ErrorCode::Io, "cannot write " + (out / "report.csv").string());
    csv << std::setprecision(10) << "run";
    for (const auto& k : delta_keys) csv << ',' << csv_field(k);
    for (const auto& [name, _] : columns) csv << ',' << name;
    csv << '\n';
    for (const auto& row : rows) {
      csv << row.at("run").get<std::string>();
      for (const auto& k : delta_keys) csv << ',' << csv_field(row.at("config_deltas").at(k).dump());
      for (const auto& [name, _] : columns) csv << ',' << row.at(name).get<double>();
      csv << '\n';
    }
  }
  return report;
}

}  // namespace sartomo
