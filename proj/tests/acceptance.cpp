// Acceptance suite: one PASS/FAIL line per criterion. Arguments select a
// subset by id (e.g. `acceptance AC4 AC6`); with none, everything runs.
// Exit status is nonzero if any selected criterion fails.
#include "sartomo/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace sartomo;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sartomo_accept_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

json preset(const std::string& name) {
  std::ifstream in(fs::path(SARTOMO_CONFIG_DIR) / (name + ".json"));
  require(static_cast<bool>(in), ErrorCode::Io, "missing preset " + name);
  return json::parse(in);
}

Eigen::VectorXcd random_complex(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> g;
  Eigen::VectorXcd v(n);
  for (Eigen::Index k = 0; k < n; ++k) v[k] = cdouble(g(rng), g(rng));
  return v;
}

double rel_err(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) { return (a - b).norm() / b.norm(); }

VoxelGrid cube_grid(int n, double spacing) {
  VoxelGrid g;
  g.dims = Eigen::Array3i::Constant(n);
  g.spacing = Vec3::Constant(spacing);
  g.origin = Vec3::Constant(-0.5 * spacing * (n - 1));
  return g;
}

GeometryConfig small_geometry(int nf, int pulses) {
  GeometryConfig g;
  g.num_frequencies = nf;
  g.pulses_per_pass = pulses;
  g.elevations_deg = {20.0, 24.0, 28.0};
  g.subaperture_span_deg = 45.0;
  return g;
}

OrientedPointCloud sphere_cloud(int n, double radius, double min_z, std::uint64_t seed) {
  SphereSurface s(Vec3::Zero(), radius);
  Rng rng(seed);
  OrientedPointCloud c;
  c.points.resize(3, n);
  c.normals.resize(3, n);
  c.view_dirs.resize(3, n);
  c.magnitudes = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n;) {
    const auto [p, nrm] = s.sample(rng);
    if (p.z() < min_z * radius) continue;
    c.points.col(i) = p;
    c.normals.col(i) = nrm;
    c.view_dirs.col(i) = nrm;
    ++i;
  }
  return c;
}

// ---------------------------------------------------------------------------

Outcome gradients() {
  Rng rng(101);
  std::uniform_int_distribution<int> layers(1, 4), width(3, 8), nf(2, 5);
  std::uniform_real_distribution<double> sigma(0.25, 1.5), beta(5.0, 100.0);
  const Aabb box{Vec3(-1.0, -0.5, -2.0), Vec3(1.0, 1.5, 1.0)};
  double worst_j = 0.0, worst_p = 0.0;
  for (int t = 0; t < 100; ++t) {
    NetworkConfig c;
    c.num_layers = layers(rng);
    c.width = width(rng);
    c.num_frequencies = nf(rng);
    c.fourier_scale = sigma(rng);
    c.softplus_beta = beta(rng);
    c.skip_layer = c.num_layers > 1 ? std::uniform_int_distribution<int>(0, c.num_layers - 1)(rng) : -1;
    SdfNetwork<double> net(c, box, derive_seed(7, t));

    // Input Jacobian against a five-point difference stencil of the value;
    // plain central differences leave O(h^2 beta^2) error on sharp softplus.
    for (int i = 0; i < 5; ++i) {
      const Vec3 p = box.sample(rng);
      const Vec3 J = net.jacobian(p);
      Vec3 fd;
      const double h = 1e-4;
      for (int k = 0; k < 3; ++k) {
        Vec3 e = Vec3::Zero();
        e[k] = h;
        const auto f = [&](double s) { return net.forward(Vec3(p + s * e)); };
        fd[k] = (f(-2) - 8 * f(-1) + 8 * f(1) - f(2)) / (12 * h);
      }
      worst_j = std::max(worst_j, (J - fd).norm() / std::max(1e-3, fd.norm()));
    }

    // Parameter gradient of the full objective, whose normal and Eikonal
    // terms differentiate through the Jacobian.
    TrainingBatch b;
    auto pts = [&](int n) {
      Points p(3, n);
      for (int i = 0; i < n; ++i) p.col(i) = box.sample(rng);
      return p;
    };
    b.surface = pts(4);
    b.surface_normals = pts(4);
    b.iso = pts(3);
    b.iso_normals = pts(3);
    b.background = pts(4);
    LossWeights w;
    w.oriented_normals = t % 2 == 0;
    w.alpha_off = 3.0;
    NetworkParams<double> grad;
    loss_and_gradient(net, b, w, grad);
    const auto analytic = grad.flatten();
    auto flat = net.params().flatten();
    for (std::size_t k = 0; k < flat.size(); ++k) {
      const double saved = flat[k];
      const double h = 1e-6;
      flat[k] = saved + h;
      net.params().unflatten(flat);
      const double lp = loss_terms(net, b, w).total;
      flat[k] = saved - h;
      net.params().unflatten(flat);
      const double lm = loss_terms(net, b, w).total;
      flat[k] = saved;
      net.params().unflatten(flat);
      const double fd = (lp - lm) / (2 * h);
      worst_p = std::max(worst_p, std::abs(fd - analytic[k]) / std::max(1e-3, std::abs(fd)));
    }
  }
  return {worst_j <= 1e-5 && worst_p <= 1e-4,
          fmt("100 nets, worst Jacobian rel err %.2e (<= 1e-5), worst parameter rel err %.2e (<= 1e-4)", worst_j,
              worst_p)};
}

Outcome operators() {
  Rng rng(202);
  const auto geom = make_geometry(small_geometry(32, 128));
  const VoxelGrid grid = cube_grid(32, range_resolution(geom));
  double worst_dot = 0.0, worst_fast = 0.0;
  for (int m : {0, 3, geom.num_subapertures() - 1}) {
    SubApertureOperator direct(geom, grid, m, OperatorMode::Direct);
    SubApertureOperator fast(geom, grid, m, OperatorMode::Fast);
    const Eigen::VectorXcd x = random_complex(grid.size(), rng);
    const Eigen::VectorXcd y = random_complex(direct.num_samples(), rng);
    for (const SubApertureOperator* op : {&direct, &fast}) {
      const cdouble lhs = op->forward(x).dot(y);
      const cdouble rhs = x.dot(op->adjoint(y));
      worst_dot = std::max(worst_dot, std::abs(lhs - rhs) / std::abs(lhs));
    }
    worst_fast = std::max(worst_fast, rel_err(fast.forward(x), direct.forward(x)));
    worst_fast = std::max(worst_fast, rel_err(fast.adjoint(y), direct.adjoint(y)));
  }
  return {worst_dot <= 1e-6 && worst_fast <= 1e-3,
          fmt("32^3 grid, dot test %.2e (<= 1e-6), fast vs direct %.2e (<= 1e-3)", worst_dot, worst_fast)};
}

// Three scatterers at random voxels, pairwise at least 3 voxels apart.
std::vector<Eigen::Index> separated_voxels(const VoxelGrid& grid, Rng& rng) {
  std::uniform_int_distribution<int> d(1, grid.dims.x() - 2);
  std::vector<Eigen::Array3i> picked;
  while (picked.size() < 3) {
    const Eigen::Array3i v(d(rng), d(rng), d(rng));
    if (std::all_of(picked.begin(), picked.end(), [&](const auto& q) { return (q - v).abs().maxCoeff() >= 3; }))
      picked.push_back(v);
  }
  std::vector<Eigen::Index> ids;
  for (const auto& v : picked) ids.push_back(grid.index(v.x(), v.y(), v.z()));
  return ids;
}

Outcome recovery() {
  const auto geom = make_geometry(small_geometry(16, 64));
  const VoxelGrid grid = cube_grid(10, range_resolution(geom));
  SubApertureOperator op(geom, grid, 1, OperatorMode::Direct);
  Rng rng(303);
  std::uniform_real_distribution<double> phase(0.0, 2 * kPi), amp(0.5, 1.5);
  auto truth_for = [&](const std::vector<Eigen::Index>& ids) {
    Eigen::VectorXcd x = Eigen::VectorXcd::Zero(grid.size());
    for (auto id : ids) x[id] = std::polar(amp(rng), phase(rng));
    return x;
  };

  // Noiseless: the support above 10% of the peak must equal the truth.
  int exact = 0;
  const int clean_trials = 5;
  for (int t = 0; t < clean_trials; ++t) {
    const auto ids = separated_voxels(grid, rng);
    SolverOptions opts;
    opts.reg.value = 0.01;
    opts.max_iters = 2000;
    const Eigen::VectorXcd x = solve_l1(op, op.forward(truth_for(ids)), opts);
    const double peak = x.cwiseAbs().maxCoeff();
    std::set<Eigen::Index> support;
    for (Eigen::Index v = 0; v < x.size(); ++v)
      if (std::abs(x[v]) >= 0.1 * peak) support.insert(v);
    exact += support == std::set<Eigen::Index>(ids.begin(), ids.end());
  }

  // 20 dB SNR: every scatterer must have one of the three strongest
  // recovered voxels within one voxel (Chebyshev).
  int localized = 0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    const auto ids = separated_voxels(grid, rng);
    const Eigen::VectorXcd clean = op.forward(truth_for(ids));
    const double sigma = clean.norm() / std::sqrt(static_cast<double>(clean.size())) / std::sqrt(100.0);
    const Eigen::VectorXcd y = clean + (sigma / std::sqrt(2.0)) * random_complex(clean.size(), rng);
    SolverOptions opts;
    opts.max_iters = 500;
    const Eigen::VectorXcd x = solve_l1(op, y, opts);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(x.size()));
    for (Eigen::Index v = 0; v < x.size(); ++v) order[static_cast<std::size_t>(v)] = v;
    // Strongest voxels with neighbors of an already chosen voxel suppressed.
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return std::abs(x[a]) > std::abs(x[b]); });
    std::vector<Eigen::Array3i> peaks;
    for (auto v : order) {
      const Eigen::Array3i q = grid.unravel(v);
      if (std::any_of(peaks.begin(), peaks.end(), [&](const auto& p) { return (p - q).abs().maxCoeff() <= 1; }))
        continue;
      peaks.push_back(q);
      if (peaks.size() == 3) break;
    }
    bool ok = true;
    for (auto id : ids) {
      const Eigen::Array3i q = grid.unravel(id);
      ok &= std::any_of(peaks.begin(), peaks.end(), [&](const auto& p) { return (p - q).abs().maxCoeff() <= 1; });
    }
    localized += ok;
  }
  return {exact == clean_trials && localized >= 18,
          fmt("noiseless exact support %d/%d, 20 dB localized within 1 voxel %d/%d (>= 18)", exact, clean_trials,
              localized, trials)};
}

// Unit-sphere fit for the projection criterion. The training box covers the
// whole start region so no start sits where the field is unconstrained.
SdfNetwork<double> fitted_sphere_net() {
  NetworkConfig c;
  c.width = 64;
  c.num_layers = 8;
  c.skip_layer = 4;
  c.fourier_scale = 0.1;
  const auto cloud = sphere_cloud(2000, 1.0, -1.0, 404);
  TrainConfig tc;
  tc.steps = 3000;
  tc.batch_size = 512;
  tc.iso_points = 500;
  tc.box_padding = 0.6;
  tc.seed = 405;
  // Default weights leave a radial offset of a few mm, too close to the 5 mm
  // window. This test is about the projector, so the fixture is fitted tighter.
  LossWeights w;
  w.on_sdf = 10.0;
  return train(SdfNetwork<double>(c, training_region(cloud, tc.box_padding), 406), cloud, tc, w).net;
}

Outcome projection() {
  const auto t_fit = Clock::now();
  const SdfNetwork<double> net = fitted_sphere_net();
  const double fit_s = seconds_since(t_fit);
  const auto t0 = Clock::now();
  const Aabb box{Vec3::Constant(-1.5), Vec3::Constant(1.5)};
  Rng rng(407);
  Points starts(3, 100);
  for (int i = 0; i < 100; ++i) starts.col(i) = box.sample(rng);
  const SamplerParams params = SamplerParams::defaults(box, 100);
  const ProjectionResult r = project_newton(NetworkField(net), starts, params);
  int good = 0, converged = 0;
  double worst = 0.0, bias = 0.0;
  for (int i = 0; i < 100; ++i) {
    const bool conv = r.status[static_cast<std::size_t>(i)] == ProjectionStatus::Converged;
    const double radial = std::abs(r.points.col(i).norm() - 1.0);
    converged += conv;
    if (conv) worst = std::max(worst, radial);
    bias += (r.points.col(i).norm() - 1.0) / 100.0;
    good += conv && std::abs(r.values[i]) <= 1e-4 && radial < 5e-3;
  }
  const double s = seconds_since(t0);
  return {good >= 95 && s < 60.0,
          fmt("%d/100 starts reach |f| <= 1e-4 with ||q|-1| < 5e-3 (>= 95); %d converged, worst ||q|-1| %.2e, mean |q|-1 %+.2e; "
              "projection %.2f s, fit %.0f s",
              good, converged, worst, bias, s, fit_s)};
}

Outcome end_to_end() {
  const auto t0 = Clock::now();
  const PipelineConfig config = parse_pipeline_config(preset("sphere-small"));
  const json m = run_pipeline(config, scratch("sphere"));
  const double s = seconds_since(t0);
  const double spacing = m.at("scene").at("voxel_spacing").get<double>();
  const double chamfer = m.at("mesh").at("chamfer").get<double>();
  return {chamfer <= 2 * spacing && s <= 900.0,
          fmt("mesh chamfer %.4f m (<= 2 x %.3f m voxel), field chamfer %.4f m, %.0f s (<= 900)", chamfer, spacing,
              m.at("validation").at("chamfer").get<double>(), s)};
}

Outcome iso_ablation() {
  const auto t0 = Clock::now();
  NetworkConfig c;
  c.width = 64;
  c.num_layers = 4;
  c.skip_layer = 2;
  c.fourier_scale = 0.25;
  const SphereSurface truth(Vec3::Zero(), 1.0);
  const Aabb eval_box{Vec3::Constant(-1.3), Vec3::Constant(1.3)};
  std::vector<double> on, off;
  std::string per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    // Sparse and occluded: 150 points, nothing below z = -0.2.
    const auto cloud = sphere_cloud(150, 1.0, -0.2, derive_seed(600, seed));
    for (bool iso : {true, false}) {
      TrainConfig tc;
      tc.steps = 1000;
      tc.batch_size = 150;
      tc.iso_points = 300;
      tc.iso_refresh_every = 100;
      tc.iso_enabled = iso;
      tc.seed = derive_seed(601, seed);
      const SdfNetwork<double> init(c, training_region(cloud, tc.box_padding), derive_seed(602, seed));
      const TrainResult r = train(init, cloud, tc, LossWeights{});
      const double ch = validate_field(NetworkField(r.net), truth, eval_box, 2000, derive_seed(603, seed)).chamfer;
      (iso ? on : off).push_back(ch);
    }
    per_seed += fmt(" %.4f/%.4f", on.back(), off.back());
  }
  std::sort(on.begin(), on.end());
  std::sort(off.begin(), off.end());
  const double s = seconds_since(t0);
  return {on[1] < off[1] && s <= 1800.0,
          fmt("median chamfer iso on %.4f vs off %.4f (need on < off; per seed on/off:%s), %.0f s (<= 1800)",
              on[1], off[1], per_seed.c_str(), s)};
}

Outcome fourier_sweep() {
  json doc = preset("box-small");
  doc["sweep"] = {{"network.num_frequencies", {6, 9}}};
  const fs::path out = scratch("box_grid");
  const auto dirs = run_grid(doc, out);
  const json report = json::parse(slurp(out / "report.json"));
  double rms6 = -1, rms9 = -1, all6 = -1, all9 = -1;
  for (const auto& row : report.at("runs")) {
    const bool six = row.at("config_deltas").at("network.num_frequencies").get<int>() == 6;
    (six ? rms6 : rms9) = row.at("on_surface_rms").get<double>();
    (six ? all6 : all9) = row.at("on_surface_rms_all").get<double>();
  }
  return {dirs.size() == 2 && rms6 >= 0 && rms9 >= 0 && rms9 <= rms6,
          fmt("box grid, on-surface RMS over observable faces N_f=9 %.5f <= N_f=6 %.5f "
              "(whole surface incl. unseen bottom: %.5f vs %.5f)",
              rms9, rms6, all9, all6)};
}

Outcome determinism() {
  json doc = preset("sphere-small");
  doc["geometry"]["num_frequencies"] = 16;
  doc["geometry"]["pulses_per_pass"] = 120;
  doc["grid"]["spacing"] = 0.2;
  doc["inversion"]["iters"] = 40;
  doc["network"]["width"] = 32;
  doc["network"]["num_layers"] = 4;
  doc["network"]["skip_layer"] = 2;
  doc["train"]["steps"] = 200;
  doc["mesh"]["resolution"] = 48;
  doc["validation"]["samples"] = 500;
  const PipelineConfig config = parse_pipeline_config(doc);
  const fs::path dir = scratch("determinism");
  set_thread_count(1);
  run_pipeline(config, dir / "a");
  // A different worker count must not change anything either.
  set_thread_count(2);
  run_pipeline(config, dir / "b");
  set_thread_count(0);
  const std::string a = slurp(RunPaths{dir / "a"}.metrics()), b = slurp(RunPaths{dir / "b"}.metrics());
  const bool mesh_same = slurp(RunPaths{dir / "a"}.mesh_ply()) == slurp(RunPaths{dir / "b"}.mesh_ply());
  return {!a.empty() && a == b && mesh_same,
          fmt("metrics.json %s (%zu bytes), mesh %s, runs at 1 and 2 threads", a == b ? "identical" : "DIFFERENT",
              a.size(), mesh_same ? "identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::pair<std::string, std::function<Outcome()>>>> criteria = {
      {"AC1", {"gradient correctness", gradients}},
      {"AC2", {"adjoint and fast operator", operators}},
      {"AC3", {"inversion recovery", recovery}},
      {"AC4", {"Newton projection", projection}},
      {"AC5", {"end-to-end sphere", end_to_end}},
      {"AC6", {"iso-point ablation", iso_ablation}},
      {"AC7", {"Fourier feature sweep", fourier_sweep}},
      {"AC8", {"determinism", determinism}},
  };
  const std::set<std::string> wanted(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [id, entry] : criteria) {
    if (!wanted.empty() && !wanted.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = entry.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << id << ' ' << (o.pass ? "PASS" : "FAIL") << ' ' << entry.first << ": " << o.detail << " ["
              << fmt("%.1f", seconds_since(t0)) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
