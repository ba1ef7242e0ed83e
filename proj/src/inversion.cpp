#include "sartomo/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sartomo {

OperatorMode operator_mode_from_string(const std::string& name) {
  if (name == "direct") return OperatorMode::Direct;
  if (name == "fast") return OperatorMode::Fast;
  if (name == "auto") return OperatorMode::Auto;
  throw Error(ErrorCode::InvalidArgument, "unknown operator mode '" + name + "'");
}

SubApertureOperator::SubApertureOperator(const CollectionGeometry& geometry, const VoxelGrid& grid, int m,
                                         OperatorMode mode)
    : grid_(grid), mode_(mode) {
  grid_.validate();
  require(m >= 0 && m < geometry.num_subapertures(), ErrorCode::InvalidArgument,
          "sub-aperture index " + std::to_string(m) + " out of range");
  const auto pulses = geometry.members(m);
  const int nf = geometry.num_frequencies();
  const Eigen::Index ns = static_cast<Eigen::Index>(pulses.size()) * nf;
  wavevectors_.resize(3, ns);
  for (std::size_t p = 0; p < pulses.size(); ++p) {
    const Vec3 u = look_vector(geometry.azimuth(pulses[p].j, pulses[p].e), geometry.elevation(pulses[p].j, pulses[p].e));
    for (int i = 0; i < nf; ++i)
      wavevectors_.col(static_cast<Eigen::Index>(p) * nf + i) = (4.0 * kPi * geometry.frequencies[i] / geometry.c) * u;
  }
  origin_phase_.resize(ns);
  for (Eigen::Index s = 0; s < ns; ++s) origin_phase_[s] = std::polar(1.0, -wavevectors_.col(s).dot(grid_.origin));

  // omega_a = k_a * spacing_a: phase advance per voxel step along axis a.
  const Eigen::Matrix3Xd omega = grid_.spacing.asDiagonal() * wavevectors_;

  if (mode_ == OperatorMode::Auto) {
    // Rough operation counts: the direct path is a dense complex GEMM over all
    // voxels per sample; the gridded path is dominated by the oversampled FFTs.
    // The weights were fitted to single-core timings of both paths.
    const double nvox = static_cast<double>(grid_.size());
    const double direct = nvox * static_cast<double>(ns);
    const double cells = 8.0 * nvox;
    const double fast = 12.0 * cells * std::log2(cells) + 432.0 * static_cast<double>(ns);
    mode_ = direct <= fast ? OperatorMode::Direct : OperatorMode::Fast;
  }

  if (mode_ == OperatorMode::Direct) {
    ex_.resize(ns, grid_.dims[0]);
    ey_.resize(ns, grid_.dims[1]);
    ez_.resize(grid_.dims[2], ns);
    for (Eigen::Index s = 0; s < ns; ++s) {
      for (int n = 0; n < grid_.dims[0]; ++n) ex_(s, n) = std::polar(1.0, -omega(0, s) * n);
      for (int n = 0; n < grid_.dims[1]; ++n) ey_(s, n) = std::polar(1.0, -omega(1, s) * n);
      for (int n = 0; n < grid_.dims[2]; ++n) ez_(n, s) = std::polar(1.0, -omega(2, s) * n);
    }
  } else {
    gridding_ = std::make_unique<GriddingTransform>(grid_.dims, omega);
  }
}

Eigen::VectorXcd SubApertureOperator::forward(const Eigen::VectorXcd& image) const {
  require(image.size() == num_voxels(), ErrorCode::ShapeMismatch, "forward operator: image does not match grid");
  if (mode_ == OperatorMode::Direct) return forward_direct(image);
  return origin_phase_.cwiseProduct(gridding_->forward(image));
}

Eigen::VectorXcd SubApertureOperator::adjoint(const Eigen::VectorXcd& samples) const {
  require(samples.size() == num_samples(), ErrorCode::ShapeMismatch, "adjoint operator: sample count mismatch");
  if (mode_ == OperatorMode::Direct) return adjoint_direct(samples);
  return gridding_->adjoint(origin_phase_.conjugate().cwiseProduct(samples));
}

Eigen::VectorXcd SubApertureOperator::forward_direct(const Eigen::VectorXcd& image) const {
  const int nx = grid_.dims[0], ny = grid_.dims[1], nz = grid_.dims[2];
  const Eigen::Index ns = num_samples();
  const Eigen::Map<const Eigen::MatrixXcd> vol(image.data(), nz, static_cast<Eigen::Index>(nx) * ny);
  const Eigen::MatrixXcd t = ez_.transpose() * vol;  // ns x (nx * ny)
  Eigen::VectorXcd y = Eigen::VectorXcd::Zero(ns);
  Eigen::VectorXcd u(ns);
  for (int ix = 0; ix < nx; ++ix) {
    u.setZero();
    for (int iy = 0; iy < ny; ++iy) u += ey_.col(iy).cwiseProduct(t.col(static_cast<Eigen::Index>(ix) * ny + iy));
    y += ex_.col(ix).cwiseProduct(u);
  }
  return origin_phase_.cwiseProduct(y);
}

Eigen::VectorXcd SubApertureOperator::adjoint_direct(const Eigen::VectorXcd& samples) const {
  const int nx = grid_.dims[0], ny = grid_.dims[1], nz = grid_.dims[2];
  const Eigen::Index ns = num_samples();
  const Eigen::VectorXcd w = origin_phase_.conjugate().cwiseProduct(samples);
  Eigen::MatrixXcd t(ns, static_cast<Eigen::Index>(nx) * ny);
  for (int ix = 0; ix < nx; ++ix) {
    const Eigen::VectorXcd u = ex_.col(ix).conjugate().cwiseProduct(w);
    for (int iy = 0; iy < ny; ++iy)
      t.col(static_cast<Eigen::Index>(ix) * ny + iy) = ey_.col(iy).conjugate().cwiseProduct(u);
  }
  Eigen::VectorXcd image(num_voxels());
  Eigen::Map<Eigen::MatrixXcd>(image.data(), nz, static_cast<Eigen::Index>(nx) * ny).noalias() =
      ez_.conjugate() * t;
  return image;
}

Eigen::VectorXcd extract_subaperture(const PhaseHistory& ph, int m) {
  require(m >= 0 && m < ph.geometry.num_subapertures(), ErrorCode::InvalidArgument, "sub-aperture index out of range");
  const auto pulses = ph.geometry.members(m);
  const int nf = ph.geometry.num_frequencies();
  Eigen::VectorXcd y(static_cast<Eigen::Index>(pulses.size()) * nf);
  for (std::size_t p = 0; p < pulses.size(); ++p)
    for (int i = 0; i < nf; ++i) y[static_cast<Eigen::Index>(p) * nf + i] = ph(i, pulses[p].j, pulses[p].e);
  return y;
}

Eigen::VectorXcd forward_operator(const SubApertureImage& img, const CollectionGeometry& geometry, int m,
                                  OperatorMode mode) {
  return SubApertureOperator(geometry, img.grid, m, mode).forward(img.values);
}

SubApertureImage adjoint_operator(const Eigen::VectorXcd& samples, const CollectionGeometry& geometry,
                                  const VoxelGrid& grid, int m, OperatorMode mode) {
  SubApertureOperator op(geometry, grid, m, mode);
  return {m, grid, op.adjoint(samples), geometry.mean_azimuth[m], geometry.mean_elevation[m]};
}

Eigen::VectorXcd soft_threshold(const Eigen::VectorXcd& v, double t) {
  Eigen::VectorXcd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double mag = std::abs(v[i]);
    out[i] = mag > t ? v[i] * ((mag - t) / mag) : cdouble(0.0);
  }
  return out;
}

namespace {

double l1_norm(const Eigen::VectorXcd& x) { return x.cwiseAbs().sum(); }

double operator_norm_sq(const SubApertureOperator& op, int iters) {
  Rng rng(0x1ab5eedULL);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXcd x(op.num_voxels());
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = cdouble(g(rng), g(rng));
  double est = 0.0;
  for (int k = 0; k < iters; ++k) {
    x /= x.norm();
    x = op.adjoint(op.forward(x));
    const double next = x.norm();
    if (k > 3 && std::abs(next - est) <= 1e-6 * next) {
      est = next;
      break;
    }
    est = next;
  }
  return est;
}

struct FistaResult {
  Eigen::VectorXcd x;
  double residual_sq = 0.0;
  int iterations = 0;
  int restarts = 0;
  std::vector<double> objective;
};

FistaResult fista(const SubApertureOperator& op, const Eigen::VectorXcd& y, double lambda, double lipschitz,
                  const Eigen::VectorXcd& x0, int max_iters, double rel_tol) {
  FistaResult r;
  Eigen::VectorXcd x = x0;
  Eigen::VectorXcd fx = op.forward(x);
  Eigen::VectorXcd x_prev = x, fx_prev = fx;
  double t = 1.0;
  double obj = 0.5 * (fx - y).squaredNorm() + lambda * l1_norm(x);
  double step_l = lipschitz;

  for (int it = 0; it < max_iters; ++it) {
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_next;
    // F is linear, so F(y_k) follows from cached forward images.
    const Eigen::VectorXcd z = x + beta * (x - x_prev);
    const Eigen::VectorXcd fz = fx + beta * (fx - fx_prev);
    Eigen::VectorXcd x_new = soft_threshold(z - op.adjoint(fz - y) / step_l, lambda / step_l);
    Eigen::VectorXcd fx_new = op.forward(x_new);
    double obj_new = 0.5 * (fx_new - y).squaredNorm() + lambda * l1_norm(x_new);

    double t_used = t_next;
    if (obj_new > obj) {
      // Restart from x with a plain proximal step; backtrack on the step if
      // the Lipschitz estimate was too small.
      ++r.restarts;
      t_used = 1.0;
      const Eigen::VectorXcd grad = op.adjoint(fx - y);
      for (int bt = 0; bt < 30; ++bt) {
        x_new = soft_threshold(x - grad / step_l, lambda / step_l);
        fx_new = op.forward(x_new);
        obj_new = 0.5 * (fx_new - y).squaredNorm() + lambda * l1_norm(x_new);
        if (obj_new <= obj) break;
        step_l *= 2.0;
      }
      if (obj_new > obj) {  // no descent possible at this precision
        r.objective.push_back(obj);
        r.iterations = it + 1;
        break;
      }
    }
    x_prev = std::move(x);
    fx_prev = std::move(fx);
    x = std::move(x_new);
    fx = std::move(fx_new);
    const double change = std::abs(obj - obj_new) / std::max(obj_new, std::numeric_limits<double>::min());
    obj = obj_new;
    t = t_used;
    r.objective.push_back(obj);
    r.iterations = it + 1;
    if (change < rel_tol && t_used != 1.0) break;
  }
  r.residual_sq = (fx - y).squaredNorm();
  r.x = std::move(x);
  return r;
}

}  // namespace

Eigen::VectorXcd solve_l1(const SubApertureOperator& op, const Eigen::VectorXcd& y, const SolverOptions& options,
                          SolveReport* report) {
  require(options.max_iters >= 1, ErrorCode::InvalidArgument, "solver needs at least one iteration");
  require(y.size() == op.num_samples(), ErrorCode::ShapeMismatch, "solver: sample count mismatch");
  require(y.allFinite(), ErrorCode::NonFinite, "non-finite input samples");
  const auto& reg = options.reg;
  require(reg.value > 0.0 && std::isfinite(reg.value), ErrorCode::InvalidArgument,
          "regularization parameter must be positive");

  const double lambda_max = op.adjoint(y).cwiseAbs().maxCoeff();
  const double lipschitz = 1.05 * operator_norm_sq(op, options.power_iters);
  SolveReport rep;
  rep.lambda_max = lambda_max;
  const Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(op.num_voxels());

  auto finish = [&](FistaResult&& r, double lambda) {
    rep.lambda = lambda;
    rep.residual_sq = r.residual_sq;
    rep.iterations = r.iterations;
    rep.restarts = r.restarts;
    rep.objective = std::move(r.objective);
    if (report) *report = rep;
    return std::move(r.x);
  };

  if (lambda_max == 0.0 || lipschitz == 0.0) {
    FistaResult r;
    r.x = zero;
    r.residual_sq = y.squaredNorm();
    return finish(std::move(r), reg.kind == Regularization::Kind::Absolute ? reg.value : 0.0);
  }

  if (reg.kind != Regularization::Kind::Discrepancy) {
    const double lambda = reg.kind == Regularization::Kind::Absolute ? reg.value : reg.value * lambda_max;
    return finish(fista(op, y, lambda, lipschitz, zero, options.max_iters, options.rel_tol), lambda);
  }

  // Discrepancy principle: bisect log(lambda) until the residual energy lands
  // in [0.9, 1.1] sigma^2. Residual grows with lambda.
  const double target = reg.value;
  double lo = std::log(1e-6 * lambda_max), hi = std::log(lambda_max);
  Eigen::VectorXcd warm = zero;
  FistaResult best;
  double best_lambda = lambda_max;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int step = 0; step < options.max_bisection_steps; ++step) {
    const double lambda = std::exp(0.5 * (lo + hi));
    FistaResult r = fista(op, y, lambda, lipschitz, warm, options.max_iters, options.rel_tol);
    rep.bisection_steps = step + 1;
    const double ratio = r.residual_sq / target;
    const double gap = std::abs(std::log(ratio));
    warm = r.x;
    const bool done = ratio >= 0.9 && ratio <= 1.1;
    if (gap < best_gap || done) {
      best_gap = gap;
      best_lambda = lambda;
      best = std::move(r);
    }
    if (done) break;
    if (ratio > 1.0)
      hi = std::log(lambda);
    else
      lo = std::log(lambda);
  }
  return finish(std::move(best), best_lambda);
}

SubApertureImage solve_subaperture(const PhaseHistory& ph, const VoxelGrid& grid, int m, const SolverOptions& options,
                                   SolveReport* report) {
  require(options.max_iters >= 1, ErrorCode::InvalidArgument, "solver needs at least one iteration");
  const Eigen::VectorXcd y = extract_subaperture(ph, m);
  require(y.allFinite(), ErrorCode::NonFinite, "non-finite input samples");
  SubApertureOperator op(ph.geometry, grid, m, options.mode);
  return {m, grid, solve_l1(op, y, options, report), ph.geometry.mean_azimuth[m], ph.geometry.mean_elevation[m]};
}

FusedImage fuse_noncoherent(const std::vector<SubApertureImage>& images) {
  require(!images.empty(), ErrorCode::InvalidArgument, "fusion needs at least one image");
  FusedImage fused{images.front().grid, Eigen::VectorXd::Zero(images.front().grid.size())};
  for (const auto& img : images) {
    require(img.grid == fused.grid && img.values.size() == fused.values.size(), ErrorCode::ShapeMismatch,
            "fusion: images do not share a grid");
    fused.values += img.values.cwiseAbs();
  }
  return fused;
}

double range_resolution(const CollectionGeometry& geometry) {
  const int nf = geometry.num_frequencies();
  require(nf >= 2, ErrorCode::InvalidArgument, "range resolution needs at least two frequencies");
  const double bandwidth = (geometry.frequencies[nf - 1] - geometry.frequencies[0]) * nf / (nf - 1);
  return geometry.c / (2.0 * bandwidth);
}

}  // namespace sartomo
