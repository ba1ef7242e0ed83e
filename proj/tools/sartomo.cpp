// Command-line front end: one subcommand per pipeline stage plus `run` and
// `report`. Failures print a single `error[CODE]: message` line and exit 1.
#include "sartomo/iso_sampler.hpp"
#include "sartomo/pipeline.hpp"
#include "sartomo/ply.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sartomo;

namespace {

json read_document(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open config: " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, path.string() + ": " + e.what());
  }
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 0;
};

// Config from --config (or built-in defaults) with the --seed override applied.
PipelineConfig load_config(const Common& c) {
  json j = c.config.empty() ? to_json(PipelineConfig{}) : read_document(c.config);
  require(!j.contains("sweep"), ErrorCode::Config, "sweeps are only accepted by `run`");
  if (c.seed) j["seed"] = *c.seed;
  return parse_pipeline_config(j);
}

void log_line(const std::string& s) { std::cerr << s << '\n'; }

Aabb model_box(const SdfNetwork<double>& net, const std::string& cloud, double padding) {
  return cloud.empty() ? network_domain(net) : training_region(read_point_cloud_ply(cloud), padding);
}

void print_json(const json& j) { std::cout << std::setw(2) << j << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SAR tomography to neural signed-distance surfaces"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "pipeline config (JSON)");
    sub->add_option("--seed", common.seed, "override the config seed");
    sub->add_option("--threads", common.threads, "worker threads (SARTOMO_THREADS wins)");
  };

  std::string out, ph_path, vox_path, subaps, cloud_path, model_path;
  bool resume = false;

  auto* simulate = app.add_subcommand("simulate", "simulate phase history for the config's scene");
  add_common(simulate);
  simulate->add_option("--out", out, "output .ph file")->required();

  auto* invert = app.add_subcommand("invert", "L1 inversion of every sub-aperture and non-coherent fusion");
  add_common(invert);
  std::optional<double> lambda, spacing;
  std::optional<int> iters;
  invert->add_option("--ph", ph_path, "input .ph file")->required();
  invert->add_option("--lambda", lambda, "relative regularization weight");
  invert->add_option("--iters", iters, "FISTA iterations");
  invert->add_option("--spacing", spacing, "voxel spacing in meters");
  invert->add_option("--subaps", subaps, "directory for per-sub-aperture volumes (default <out>.subaps)");
  invert->add_option("--out", out, "output fused .vox file")->required();

  auto* cloud = app.add_subcommand("cloud", "threshold the fused volume into an oriented point cloud");
  add_common(cloud);
  std::optional<double> quantile, absolute, radius;
  cloud->add_option("--vox", vox_path, "fused .vox file")->required();
  cloud->add_option("--subaps", subaps, "sub-aperture directory (default <vox>.subaps)");
  auto* q_opt = cloud->add_option("--quantile", quantile, "magnitude quantile threshold");
  cloud->add_option("--absolute", absolute, "absolute magnitude threshold")->excludes(q_opt);
  cloud->add_option("--radius", radius, "PCA neighborhood radius in meters");
  cloud->add_option("--out", out, "output .ply file")->required();

  auto* trainer = app.add_subcommand("train", "fit the signed-distance network to a point cloud");
  add_common(trainer);
  std::string history;
  trainer->add_option("--cloud", cloud_path, "oriented point cloud .ply")->required();
  trainer->add_option("--history", history, "loss history CSV (default <out>.csv)");
  trainer->add_option("--out", out, "output .sdfnet file")->required();

  auto* isopoints = app.add_subcommand("isopoints", "sample points on the network's zero-level set");
  add_common(isopoints);
  int iso_count = 1000;
  isopoints->add_option("--model", model_path, ".sdfnet file")->required();
  isopoints->add_option("--cloud", cloud_path, "training cloud; bounds the search (default: network domain)");
  isopoints->add_option("--count", iso_count, "target number of points");
  isopoints->add_option("--out", out, "output .ply file")->required();

  auto* mesher = app.add_subcommand("mesh", "marching cubes on the network's zero-level set");
  add_common(mesher);
  int res = 128;
  mesher->add_option("--model", model_path, ".sdfnet file")->required();
  mesher->add_option("--cloud", cloud_path, "training cloud; bounds the grid (default: network domain)");
  mesher->add_option("--res", res, "cells per axis");
  mesher->add_option("--out", out, "output .ply or .obj file")->required();

  auto* validator = app.add_subcommand("validate", "compare a network with the config's ground-truth surface");
  add_common(validator);
  validator->add_option("--model", model_path, ".sdfnet file")->required();
  validator->add_option("--cloud", cloud_path, "training cloud; bounds the evaluation (default: network domain)");
  validator->add_option("--out", out, "write the report as JSON here too");

  auto* runner = app.add_subcommand("run", "full pipeline; a config with a sweep block runs the whole grid");
  add_common(runner);
  runner->add_option("--out", out, "run directory")->required();
  runner->add_flag("--resume", resume, "reuse artifacts already in the run directory");

  auto* reporter = app.add_subcommand("report", "side-by-side metrics of finished runs");
  std::vector<std::string> run_dirs;
  reporter->add_option("runs", run_dirs, "run directories")->required()->expected(2, -1);
  reporter->add_option("--out", out, "directory for report.csv and report.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[INVALID_ARGUMENT]: " << e.what() << '\n';
    return 2;
  }

  try {
    if (common.threads > 0) set_thread_count(common.threads);

    if (*simulate) {
      const PipelineConfig config = load_config(common);
      const Scene scene = make_scene(config);
      const PhaseHistory ph = simulate_phase_history(scene, make_geometry(config.geometry), config.scene.noise_sigma,
                                                     stream_seed(config, SeedStream::Noise));
      save_phase_history(out, ph);
      log_line("wrote " + out + " (" + std::to_string(scene.scatterers.size()) + " scatterers, " +
               std::to_string(ph.geometry.num_subapertures()) + " sub-apertures)");
    } else if (*invert) {
      PipelineConfig config = load_config(common);
      if (lambda) {
        config.inversion.reg.kind = Regularization::Kind::Relative;
        config.inversion.reg.value = *lambda;
      }
      if (iters) config.inversion.iters = *iters;
      if (spacing) config.grid.spacing = *spacing;
      config.validate();
      const PhaseHistory ph = load_phase_history(ph_path);
      const VoxelGrid grid = make_grid(config, make_surface(config.scene.surface)->bounds(), ph.geometry);
      const auto images = invert_all(ph, grid, config.inversion, log_line);
      save_subaperture_images(subaps.empty() ? out + ".subaps" : subaps, images);
      save_fused_image(out, fuse_noncoherent(images));
      log_line("wrote " + out);
    } else if (*cloud) {
      PipelineConfig config = load_config(common);
      if (quantile) config.cloud.threshold = Threshold::quantile(*quantile);
      if (absolute) config.cloud.threshold = Threshold::absolute(*absolute);
      if (radius) config.cloud.normal_radius = *radius;
      config.validate();
      const OrientedPointCloud c =
          build_point_cloud(load_fused_image(vox_path), load_subaperture_images(subaps.empty() ? vox_path + ".subaps" : subaps),
                            config.cloud.threshold, config.cloud.normal_radius);
      write_point_cloud_ply(out, c);
      log_line("wrote " + out + " (" + std::to_string(c.size()) + " points)");
    } else if (*trainer) {
      const PipelineConfig config = load_config(common);
      const OrientedPointCloud c = read_point_cloud_ply(cloud_path);
      const TrainResult r = train(make_network(config, c), c, config.train, config.loss,
                                  fs::path(out).replace_extension(".failed.sdfnet"), [](const HistoryRow& h) {
                                    log_line("step " + std::to_string(h.step) + " loss " + std::to_string(h.terms.total));
                                  });
      r.net.save(out);
      write_history_csv(history.empty() ? fs::path(out).replace_extension(".csv") : fs::path(history), r.history);
      log_line("wrote " + out + " (best loss " + std::to_string(r.best_loss) + " at step " +
               std::to_string(r.best_step) + ")");
    } else if (*isopoints) {
      const PipelineConfig config = load_config(common);
      const SdfNetwork<double> net = SdfNetwork<double>::load(model_path);
      const IsoPointSet iso = extract_iso_points(NetworkField(net), model_box(net, cloud_path, config.train.box_padding),
                                                 iso_count, stream_seed(config, SeedStream::Validation));
      write_iso_points_ply(out, iso);
      log_line("wrote " + out + " (" + std::to_string(iso.points.cols()) + " points)");
    } else if (*mesher) {
      const PipelineConfig config = load_config(common);
      const SdfNetwork<double> net = SdfNetwork<double>::load(model_path);
      const TriangleMesh m = marching_cubes(NetworkField(net), model_box(net, cloud_path, config.train.box_padding), res);
      if (fs::path(out).extension() == ".obj")
        write_mesh_obj(out, m);
      else
        write_mesh_ply(out, m);
      log_line("wrote " + out + " (" + std::to_string(m.triangle_count()) + " triangles)");
    } else if (*validator) {
      const PipelineConfig config = load_config(common);
      const SdfNetwork<double> net = SdfNetwork<double>::load(model_path);
      const CollectionGeometry geometry = make_geometry(config.geometry);
      const ValidationReport report =
          validate_field(NetworkField(net), *make_surface(config.scene.surface),
                         model_box(net, cloud_path, config.train.box_padding), config.validation.samples,
                         stream_seed(config, SeedStream::Validation),
                         [&](const Vec3& n) { return faces_any_subaperture(geometry, n); });
      const json j = report;
      print_json(j);
      if (!out.empty()) {
        std::ofstream f(out);
        require(static_cast<bool>(f), ErrorCode::Io, "cannot write " + out);
        f << std::setw(2) << j << '\n';
      }
    } else if (*runner) {
      require(!common.config.empty(), ErrorCode::Config, "run needs --config");
      json doc = read_document(common.config);
      if (common.seed) doc["seed"] = *common.seed;
      const RunOptions options{resume, log_line};
      if (doc.contains("sweep")) {
        const auto dirs = run_grid(doc, out, options);
        log_line("finished " + std::to_string(dirs.size()) + " runs under " + out);
      } else {
        print_json(run_pipeline(parse_pipeline_config(doc), out, options));
      }
    } else if (*reporter) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      print_json(ablation_report(dirs, out));
    }
  } catch (const Error& e) {
    std::cerr << "error[" << to_string(e.code()) << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[INTERNAL]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
