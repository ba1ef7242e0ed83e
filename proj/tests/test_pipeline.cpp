#include <doctest.h>

#include "sartomo/pipeline.hpp"

#include <fstream>
#include <sstream>

using namespace sartomo;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory, removed on scope exit.
struct ScratchDir {
  fs::path path;
  explicit ScratchDir(const std::string& name) : path(fs::temp_directory_path() / ("sartomo_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// A pipeline small enough to run in a few seconds.
json tiny_document(std::uint64_t seed = 11) {
  json j = json::parse(R"({
    "schema_version": 1,
    "name": "tiny",
    "seed": 0,
    "scene": {"surface": {"type": "sphere", "center": [0, 0, 0], "radius": 1.0}, "scatterers": 150},
    "geometry": {"num_frequencies": 16, "pulses_per_pass": 32, "elevations_deg": [20, 30],
                 "subaperture_span_deg": 45.0},
    "inversion": {"iters": 30},
    "cloud": {"quantile": 0.9},
    "network": {"width": 16, "num_layers": 2, "skip_layer": 1, "num_frequencies": 4, "fourier_scale": 0.25},
    "train": {"steps": 40, "batch_size": 128, "iso_refresh_every": 20, "iso_points": 60, "log_every": 10,
              "learning_rate": 1e-3},
    "mesh": {"resolution": 16},
    "validation": {"samples": 200}
  })");
  j["seed"] = seed;
  return j;
}

}  // namespace

TEST_CASE("config: minimal document takes defaults") {
  const PipelineConfig c = parse_pipeline_config({{"schema_version", 1}, {"seed", 3}});
  CHECK(c.seed == 3);
  CHECK(c.network.width == NetworkConfig{}.width);
  CHECK(c.train.seed == derive_seed(3, 0x7472));
  CHECK(parse_pipeline_config({{"schema_version", 1}, {"seed", 4}}).train.seed != c.train.seed);
}

TEST_CASE("config: required fields and unknown keys are rejected") {
  auto code_of = [](const json& j) {
    try {
      parse_pipeline_config(j);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  CHECK(code_of({{"seed", 1}}) == ErrorCode::Config);
  CHECK(code_of({{"schema_version", 1}}) == ErrorCode::Config);
  CHECK(code_of({{"schema_version", 2}, {"seed", 1}}) == ErrorCode::Config);
  CHECK(code_of({{"schema_version", 1}, {"seed", 1}, {"colour", "red"}}) == ErrorCode::Config);
  CHECK(code_of({{"schema_version", 1}, {"seed", 1}, {"grid", {{"spacng", 0.1}}}}) == ErrorCode::Config);
  CHECK(code_of({{"schema_version", 1}, {"seed", 1}, {"network", {{"depth", 3}}}}) == ErrorCode::Config);
  CHECK(code_of({{"schema_version", 1}, {"seed", 1}, {"train", {{"seed", 9}}}}) == ErrorCode::Config);
  CHECK(code_of({{"schema_version", 1}, {"seed", 1}, {"cloud", {{"quantile", 0.9}, {"absolute", 1.0}}}}) ==
        ErrorCode::Config);
  CHECK(code_of({{"schema_version", 1}, {"seed", "one"}}) == ErrorCode::Config);
  CHECK(code_of({{"schema_version", 1}, {"seed", 1}, {"mesh", {{"resolution", 4}}}}) == ErrorCode::Config);
}

TEST_CASE("config: JSON round trip is exact") {
  const PipelineConfig c = parse_pipeline_config(tiny_document());
  const json j = to_json(c);
  CHECK(to_json(parse_pipeline_config(j)) == j);
  CHECK(j.at("network").at("width") == 16);
  CHECK(!j.at("train").contains("seed"));
}

TEST_CASE("config: sweep expansion is a row-major cartesian product") {
  json doc = tiny_document();
  doc["sweep"] = {{"network.num_frequencies", {6, 9}}, {"train.iso_enabled", {false, true}}};
  const auto runs = expand_sweep(doc);
  REQUIRE(runs.size() == 4);
  CHECK(runs[0].first == "network.num_frequencies=6,train.iso_enabled=false");
  CHECK(runs[1].first == "network.num_frequencies=6,train.iso_enabled=true");
  CHECK(runs[3].first == "network.num_frequencies=9,train.iso_enabled=true");
  for (const auto& [label, j] : runs) {
    CHECK(!j.contains("sweep"));
    CHECK_NOTHROW(parse_pipeline_config(j));
  }
  CHECK(runs[2].second.at("network").at("num_frequencies") == 9);
  CHECK(runs[2].second.at("network").at("width") == 16);

  CHECK(expand_sweep(tiny_document()).size() == 1);
  json bad = tiny_document();
  bad["sweep"] = {{"train.steps", json::array()}};
  CHECK_THROWS_AS(expand_sweep(bad), Error);
}

TEST_CASE("config: dotted paths and flattening") {
  json j = json::object();
  set_dotted(j, "a.b.c", 3);
  CHECK(j == json::parse(R"({"a": {"b": {"c": 3}}})"));
  CHECK(flatten_json(j) == json::parse(R"({"a.b.c": 3})"));
  j["x"] = 1;
  CHECK_THROWS_AS(set_dotted(j, "x.y", 2), Error);
  CHECK_THROWS_AS(set_dotted(j, "a..c", 2), Error);
}

TEST_CASE("config: load rejects sweep documents and missing files") {
  ScratchDir dir("config_load");
  json doc = tiny_document();
  doc["sweep"] = {{"train.steps", {10, 20}}};
  std::ofstream(dir.path / "sweep.json") << doc;
  CHECK_THROWS_AS(load_pipeline_config(dir.path / "sweep.json"), Error);
  try {
    load_pipeline_config(dir.path / "absent.json");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Io);
  }
  std::ofstream(dir.path / "ok.json") << tiny_document();
  CHECK(load_pipeline_config(dir.path / "ok.json").name == "tiny");
}

TEST_CASE("pipeline: end to end emits every artifact and is deterministic") {
  ScratchDir dir("pipeline");
  const PipelineConfig config = parse_pipeline_config(tiny_document());
  const json a = run_pipeline(config, dir.path / "a");
  const RunPaths p{dir.path / "a"};
  for (const auto& f : {p.config(), p.phase_history(), p.fused(), p.cloud(), p.model(), p.best_model(), p.history(),
                        p.mesh_ply(), p.mesh_obj(), p.metrics()})
    CHECK_MESSAGE(fs::exists(f), f.string());
  CHECK(fs::is_directory(p.subapertures()));
  CHECK(a.at("mesh").at("triangles").get<int>() > 0);
  CHECK(a.at("cloud").at("points").get<int>() > 0);
  for (const auto& key : {"chamfer", "on_surface_rms", "eikonal_mean", "normal_rms_deg"}) {
    const double v = a.at("validation").at(key).get<double>();
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
  }

  const json b = run_pipeline(config, dir.path / "b");
  CHECK(a == b);
  CHECK(slurp(p.metrics()) == slurp(RunPaths{dir.path / "b"}.metrics()));

  // Resume reuses every artifact and reproduces the metrics.
  const auto stamp = fs::last_write_time(p.model());
  const json c = run_pipeline(config, dir.path / "a", {.resume = true});
  CHECK(c == a);
  CHECK(fs::last_write_time(p.model()) == stamp);

  PipelineConfig other = config;
  other.train.steps = 41;
  try {
    run_pipeline(other, dir.path / "a", {.resume = true});
    FAIL("expected a config mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Config);
  }

  SUBCASE("report of identical runs has no deltas") {
    const json r = ablation_report({dir.path / "a", dir.path / "b"}, dir.path / "report");
    CHECK(r.at("delta_keys").empty());
    for (const auto& row : r.at("runs"))
      for (const auto& [k, v] : row.at("delta_vs_first").items()) CHECK(v.get<double>() == 0.0);
    CHECK(fs::exists(dir.path / "report" / "report.csv"));
    CHECK(fs::exists(dir.path / "report" / "report.json"));
  }
  SUBCASE("report names the missing metrics file") {
    fs::create_directories(dir.path / "broken");
    fs::copy_file(p.config(), dir.path / "broken" / "config.json");
    try {
      ablation_report({dir.path / "a", dir.path / "broken"});
      FAIL("expected a missing artifact");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MissingArtifact);
      CHECK(std::string(e.what()).find("metrics.json") != std::string::npos);
    }
  }
}

TEST_CASE("pipeline: stage errors carry the stage name") {
  ScratchDir dir("pipeline_error");
  json doc = tiny_document();
  doc["cloud"] = {{"absolute", 1e12}};
  try {
    run_pipeline(parse_pipeline_config(doc), dir.path);
    FAIL("expected an empty cloud");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyPointCloud);
    CHECK(std::string(e.what()).rfind("cloud: ", 0) == 0);
  }
  // Earlier stages left their artifacts behind.
  CHECK(fs::exists(RunPaths{dir.path}.phase_history()));
  CHECK(fs::exists(RunPaths{dir.path}.fused()));
}

TEST_CASE("pipeline: grid runs every config and reports config deltas") {
  ScratchDir dir("grid");
  json doc = tiny_document();
  doc["train"]["steps"] = 20;
  doc["sweep"] = {{"train.iso_enabled", {false, true}}};
  const auto dirs = run_grid(doc, dir.path);
  REQUIRE(dirs.size() == 2);
  const json report = json::parse(slurp(dir.path / "report.json"));
  CHECK(report.at("delta_keys") == json::array({"train.iso_enabled"}));
  CHECK(report.at("runs")[0].at("config_deltas").at("train.iso_enabled") == false);
  CHECK(report.at("runs")[1].at("config_deltas").at("train.iso_enabled") == true);
  CHECK(report.at("runs")[1].contains("chamfer"));
}
