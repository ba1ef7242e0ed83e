#include <doctest.h>

#include "sartomo/inversion.hpp"

#include <chrono>
#include <cmath>

using namespace sartomo;

namespace {

GeometryConfig small_geometry() {
  GeometryConfig g;
  g.num_frequencies = 16;
  g.pulses_per_pass = 64;
  g.elevations_deg = {20.0, 24.0, 28.0};
  g.subaperture_span_deg = 45.0;
  return g;
}

VoxelGrid cube_grid(int n, double spacing) {
  VoxelGrid g;
  g.dims = Eigen::Array3i::Constant(n);
  g.spacing = Vec3::Constant(spacing);
  g.origin = Vec3::Constant(-0.5 * spacing * (n - 1));
  return g;
}

// Dense operator matrix built sample by sample from the steering phase.
Eigen::MatrixXcd dense_operator(const CollectionGeometry& geom, const VoxelGrid& grid, int m) {
  const auto mem = geom.members(m);
  const int nf = geom.num_frequencies();
  Eigen::MatrixXcd A(static_cast<Eigen::Index>(mem.size()) * nf, grid.size());
  for (std::size_t p = 0; p < mem.size(); ++p) {
    const double az = geom.azimuth(mem[p].j, mem[p].e);
    const double el = geom.elevation(mem[p].j, mem[p].e);
    for (int i = 0; i < nf; ++i)
      for (Eigen::Index v = 0; v < grid.size(); ++v)
        A(static_cast<Eigen::Index>(p) * nf + i, v) = steering_phase(grid.center(v), geom.frequencies[i], az, el);
  }
  return A;
}

Eigen::VectorXcd random_complex(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  Eigen::VectorXcd v(n);
  for (Eigen::Index k = 0; k < n; ++k) v[k] = cdouble(g(rng), g(rng));
  return v;
}

double rel_err(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST_CASE("direct operator equals the dense steering matrix") {
  const auto geom = make_geometry(small_geometry());
  const VoxelGrid grid = cube_grid(6, range_resolution(geom));
  for (int m : {0, 5, geom.num_subapertures() - 1}) {
    const Eigen::MatrixXcd A = dense_operator(geom, grid, m);
    SubApertureOperator op(geom, grid, m, OperatorMode::Direct);
    const Eigen::VectorXcd x = random_complex(grid.size(), 1);
    const Eigen::VectorXcd y = random_complex(op.num_samples(), 2);
    CHECK(rel_err(op.forward(x), A * x) < 1e-11);
    CHECK(rel_err(op.adjoint(y), A.adjoint() * y) < 1e-11);
  }
}

TEST_CASE("fast operator approximates the direct one") {
  const auto geom = make_geometry(small_geometry());
  const VoxelGrid grid = cube_grid(12, range_resolution(geom));
  SubApertureOperator direct(geom, grid, 3, OperatorMode::Direct);
  SubApertureOperator fast(geom, grid, 3, OperatorMode::Fast);
  const Eigen::VectorXcd x = random_complex(grid.size(), 4);
  const Eigen::VectorXcd y = random_complex(direct.num_samples(), 5);
  CHECK(rel_err(fast.forward(x), direct.forward(x)) < 1e-3);
  CHECK(rel_err(fast.adjoint(y), direct.adjoint(y)) < 1e-3);
}

TEST_CASE("adjoint dot test in both modes") {
  const auto geom = make_geometry(small_geometry());
  const VoxelGrid grid = cube_grid(10, range_resolution(geom));
  for (OperatorMode mode : {OperatorMode::Direct, OperatorMode::Fast}) {
    SubApertureOperator op(geom, grid, 7, mode);
    const Eigen::VectorXcd x = random_complex(grid.size(), 6);
    const Eigen::VectorXcd y = random_complex(op.num_samples(), 7);
    const cdouble lhs = op.forward(x).dot(y);   // <Fx, y>
    const cdouble rhs = x.dot(op.adjoint(y));   // <x, F^H y>
    CHECK(std::abs(lhs - rhs) / std::abs(lhs) < 1e-10);
  }
}

TEST_CASE("soft threshold shrinks magnitude and keeps phase") {
  Eigen::VectorXcd v(4);
  v << cdouble(3, 4), cdouble(0.1, 0), cdouble(0, -2), cdouble(0, 0);
  const auto s = soft_threshold(v, 1.0);
  CHECK(std::abs(s[0] - cdouble(3, 4) * (4.0 / 5.0)) < 1e-15);
  CHECK(s[1] == cdouble(0, 0));
  CHECK(std::abs(s[2] - cdouble(0, -1)) < 1e-15);
  CHECK(s[3] == cdouble(0, 0));
}

TEST_CASE("FISTA objective decreases and matches the prox optimality condition") {
  const auto geom = make_geometry(small_geometry());
  const VoxelGrid grid = cube_grid(6, range_resolution(geom));
  SubApertureOperator op(geom, grid, 2, OperatorMode::Direct);
  Eigen::VectorXcd truth = Eigen::VectorXcd::Zero(grid.size());
  truth[17] = cdouble(1.0, 0.5);
  truth[100] = cdouble(-0.7, 0.2);
  const Eigen::VectorXcd y = op.forward(truth) + 0.05 * random_complex(op.num_samples(), 3);
  SolverOptions opts;
  opts.max_iters = 2000;
  opts.rel_tol = 1e-12;
  SolveReport rep;
  const Eigen::VectorXcd x = solve_l1(op, y, opts, &rep);
  CHECK(rep.lambda == doctest::Approx(0.05 * rep.lambda_max));
  for (std::size_t k = 1; k < rep.objective.size(); ++k)
    CHECK(rep.objective[k] <= rep.objective[k - 1] * (1 + 1e-12));
  // Subgradient optimality: g = F^H (y - F x); |g_v| <= lambda and g_v = lambda x_v/|x_v| on the support.
  const Eigen::VectorXcd g = op.adjoint(y - op.forward(x));
  for (Eigen::Index v = 0; v < x.size(); ++v) {
    if (std::abs(x[v]) > 1e-8) {
      CHECK(std::abs(g[v] - rep.lambda * x[v] / std::abs(x[v])) < 1e-3 * rep.lambda);
    } else {
      CHECK(std::abs(g[v]) <= rep.lambda * (1 + 1e-3));
    }
  }
}

TEST_CASE("noise-free sparse recovery finds the support") {
  const auto geom = make_geometry(small_geometry());
  const VoxelGrid grid = cube_grid(8, range_resolution(geom));
  SubApertureOperator op(geom, grid, 1, OperatorMode::Direct);
  Eigen::VectorXcd truth = Eigen::VectorXcd::Zero(grid.size());
  truth[grid.index(2, 3, 4)] = 1.0;
  truth[grid.index(6, 1, 2)] = cdouble(0, 1);
  const Eigen::VectorXcd y = op.forward(truth);
  SolverOptions opts;
  opts.reg.value = 0.01;
  opts.max_iters = 1000;
  const Eigen::VectorXcd x = solve_l1(op, y, opts);
  Eigen::Index arg;
  x.cwiseAbs().maxCoeff(&arg);
  CHECK((arg == grid.index(2, 3, 4) || arg == grid.index(6, 1, 2)));
}

TEST_CASE("discrepancy rule lands in the target residual band") {
  const auto geom = make_geometry(small_geometry());
  const VoxelGrid grid = cube_grid(6, range_resolution(geom));
  SubApertureOperator op(geom, grid, 4, OperatorMode::Direct);
  Eigen::VectorXcd truth = Eigen::VectorXcd::Zero(grid.size());
  truth[40] = 2.0;
  const double sigma = 0.1;
  const Eigen::VectorXcd y = op.forward(truth) + sigma / std::sqrt(2.0) * random_complex(op.num_samples(), 9);
  SolverOptions opts;
  opts.reg.kind = Regularization::Kind::Discrepancy;
  opts.reg.value = sigma * sigma * static_cast<double>(op.num_samples());
  SolveReport rep;
  solve_l1(op, y, opts, &rep);
  CHECK(rep.bisection_steps <= 12);
  const double target = opts.reg.value;
  CHECK(rep.residual_sq >= 0.9 * target);
  CHECK(rep.residual_sq <= 1.1 * target);
}

TEST_CASE("fused image is the sum of magnitudes") {
  VoxelGrid grid = cube_grid(2, 0.1);
  SubApertureImage a{0, grid, random_complex(8, 1)};
  SubApertureImage b{1, grid, random_complex(8, 2)};
  const FusedImage f = fuse_noncoherent({a, b});
  CHECK((f.values - (a.values.cwiseAbs() + b.values.cwiseAbs())).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("fast mode speed and accuracy on a 32 cube") {
  auto cfg = small_geometry();
  cfg.num_frequencies = 32;
  cfg.pulses_per_pass = 128;
  const auto geom = make_geometry(cfg);
  const VoxelGrid grid = cube_grid(32, range_resolution(geom));
  const auto t0 = std::chrono::steady_clock::now();
  SubApertureOperator direct(geom, grid, 0, OperatorMode::Direct);
  const Eigen::VectorXcd x = random_complex(grid.size(), 1);
  const Eigen::VectorXcd yd = direct.forward(x);
  const auto t1 = std::chrono::steady_clock::now();
  SubApertureOperator fast(geom, grid, 0, OperatorMode::Fast);
  const Eigen::VectorXcd yf = fast.forward(x);
  const auto t2 = std::chrono::steady_clock::now();
  MESSAGE("direct ", std::chrono::duration<double>(t1 - t0).count(), " s, fast ",
          std::chrono::duration<double>(t2 - t1).count(), " s");
  CHECK(rel_err(yf, yd) < 1e-3);
}
