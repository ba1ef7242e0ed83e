#include "sartomo/nufft.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>

namespace sartomo {

double kaiser_bessel(double t, double half_width, double beta) {
  const double r = t / half_width;
  if (std::abs(r) > 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - r * r));
}

double kaiser_bessel_ft(double nu, double half_width, double beta) {
  const double a = 2.0 * kPi * half_width * nu;
  const double d = beta * beta - a * a;
  const double w = 2.0 * half_width;
  if (d > 1e-12) {
    const double s = std::sqrt(d);
    return w * std::sinh(s) / s;
  }
  if (d < -1e-12) {
    const double s = std::sqrt(-d);
    return w * std::sin(s) / s;
  }
  return w;
}

GriddingTransform::GriddingTransform(Eigen::Array3i dims, const Eigen::Matrix3Xd& omega, int oversampling,
                                     int half_width)
    : dims_(dims), taps_(2 * half_width) {
  require((dims > 0).all() && oversampling >= 2 && half_width >= 1, ErrorCode::InvalidArgument,
          "invalid gridding transform configuration");
  grid_ = oversampling * dims_;
  shift_ = dims_ / 2;
  const double sigma = oversampling;
  const double w = half_width;
  // Beatty et al. shape parameter for the given oversampling and width.
  const double beta = kPi * std::sqrt(std::max(0.0, taps_ * taps_ / (sigma * sigma) * (sigma - 0.5) * (sigma - 0.5) - 0.8));

  deconv_.resize(3);
  valid_.resize(3);
  for (int a = 0; a < 3; ++a) {
    deconv_[a].resize(dims_[a]);
    for (int n = 0; n < dims_[a]; ++n) {
      const int centered = n - shift_[a];
      deconv_[a][n] = 1.0 / kaiser_bessel_ft(static_cast<double>(centered) / grid_[a], w, beta);
      valid_[a].push_back((centered % grid_[a] + grid_[a]) % grid_[a]);
    }
  }

  const Eigen::Index ns = omega.cols();
  first_tap_.resize(3, ns);
  weights_.resize(static_cast<std::size_t>(ns) * 3 * taps_);
  phase_.resize(static_cast<std::size_t>(ns));
  for (Eigen::Index s = 0; s < ns; ++s) {
    double centering = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double om = omega(a, s);
      centering += om * shift_[a];
      double u = std::fmod(om * grid_[a] / (2.0 * kPi), static_cast<double>(grid_[a]));
      if (u < 0.0) u += grid_[a];
      const int k0 = static_cast<int>(std::floor(u)) - half_width + 1;
      first_tap_(a, s) = k0;
      for (int t = 0; t < taps_; ++t)
        weights_[(static_cast<std::size_t>(s) * 3 + a) * taps_ + t] = kaiser_bessel(u - (k0 + t), w, beta);
    }
    phase_[static_cast<std::size_t>(s)] = std::polar(1.0, -centering);
  }
}

void GriddingTransform::fft_axis(std::vector<cdouble>& g, int axis, bool inverse) const {
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);
  const int len = grid_[axis];
  std::vector<cdouble> in(static_cast<std::size_t>(len)), out(static_cast<std::size_t>(len));

  // Forward runs z, y, x and the adjoint x, y, z; in both orders an axis
  // earlier than `axis` is still sparse (or no longer needed).
  auto rows_for = [&](int other) -> std::vector<int> {
    if (other < axis) return valid_[other];
    std::vector<int> all(static_cast<std::size_t>(grid_[other]));
    for (int i = 0; i < grid_[other]; ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
  };
  int o1 = axis == 0 ? 1 : 0;
  int o2 = axis == 2 ? 1 : 2;
  const auto rows1 = rows_for(o1);
  const auto rows2 = rows_for(o2);
  for (int r1 : rows1) {
    for (int r2 : rows2) {
      Eigen::Array3i idx;
      idx[o1] = r1;
      idx[o2] = r2;
      for (int k = 0; k < len; ++k) {
        idx[axis] = k;
        in[static_cast<std::size_t>(k)] = g[grid_index(idx[0], idx[1], idx[2])];
      }
      if (inverse)
        fft.inv(out, in);
      else
        fft.fwd(out, in);
      for (int k = 0; k < len; ++k) {
        idx[axis] = k;
        g[grid_index(idx[0], idx[1], idx[2])] = out[static_cast<std::size_t>(k)];
      }
    }
  }
}

Eigen::VectorXcd GriddingTransform::forward(const Eigen::VectorXcd& x) const {
  require(x.size() == static_cast<Eigen::Index>(dims_[0]) * dims_[1] * dims_[2], ErrorCode::ShapeMismatch,
          "gridding forward: image size mismatch");
  std::vector<cdouble> g(static_cast<std::size_t>(grid_[0]) * grid_[1] * grid_[2], cdouble(0.0));
  Eigen::Index v = 0;
  for (int ix = 0; ix < dims_[0]; ++ix)
    for (int iy = 0; iy < dims_[1]; ++iy)
      for (int iz = 0; iz < dims_[2]; ++iz, ++v)
        g[grid_index(valid_[0][ix], valid_[1][iy], valid_[2][iz])] =
            x[v] * (deconv_[0][ix] * deconv_[1][iy] * deconv_[2][iz]);
  fft_axis(g, 2, false);
  fft_axis(g, 1, false);
  fft_axis(g, 0, false);

  const Eigen::Index ns = num_samples();
  Eigen::VectorXcd y(ns);
  for (Eigen::Index s = 0; s < ns; ++s) {
    const double* wx = &weights_[(static_cast<std::size_t>(s) * 3 + 0) * taps_];
    const double* wy = wx + taps_;
    const double* wz = wy + taps_;
    cdouble acc(0.0);
    for (int a = 0; a < taps_; ++a) {
      const int kx = ((first_tap_(0, s) + a) % grid_[0] + grid_[0]) % grid_[0];
      for (int b = 0; b < taps_; ++b) {
        const int ky = ((first_tap_(1, s) + b) % grid_[1] + grid_[1]) % grid_[1];
        const double wxy = wx[a] * wy[b];
        const std::size_t row = grid_index(kx, ky, 0);
        cdouble line(0.0);
        for (int c = 0; c < taps_; ++c) {
          const int kz = ((first_tap_(2, s) + c) % grid_[2] + grid_[2]) % grid_[2];
          line += wz[c] * g[row + static_cast<std::size_t>(kz)];
        }
        acc += wxy * line;
      }
    }
    y[s] = phase_[static_cast<std::size_t>(s)] * acc;
  }
  return y;
}

Eigen::VectorXcd GriddingTransform::adjoint(const Eigen::VectorXcd& y) const {
  require(y.size() == num_samples(), ErrorCode::ShapeMismatch, "gridding adjoint: sample count mismatch");
  std::vector<cdouble> g(static_cast<std::size_t>(grid_[0]) * grid_[1] * grid_[2], cdouble(0.0));
  for (Eigen::Index s = 0; s < y.size(); ++s) {
    const cdouble val = std::conj(phase_[static_cast<std::size_t>(s)]) * y[s];
    const double* wx = &weights_[(static_cast<std::size_t>(s) * 3 + 0) * taps_];
    const double* wy = wx + taps_;
    const double* wz = wy + taps_;
    for (int a = 0; a < taps_; ++a) {
      const int kx = ((first_tap_(0, s) + a) % grid_[0] + grid_[0]) % grid_[0];
      for (int b = 0; b < taps_; ++b) {
        const int ky = ((first_tap_(1, s) + b) % grid_[1] + grid_[1]) % grid_[1];
        const cdouble vxy = val * (wx[a] * wy[b]);
        const std::size_t row = grid_index(kx, ky, 0);
        for (int c = 0; c < taps_; ++c) {
          const int kz = ((first_tap_(2, s) + c) % grid_[2] + grid_[2]) % grid_[2];
          g[row + static_cast<std::size_t>(kz)] += wz[c] * vxy;
        }
      }
    }
  }
  fft_axis(g, 0, true);
  fft_axis(g, 1, true);
  fft_axis(g, 2, true);

  Eigen::VectorXcd x(static_cast<Eigen::Index>(dims_[0]) * dims_[1] * dims_[2]);
  Eigen::Index v = 0;
  for (int ix = 0; ix < dims_[0]; ++ix)
    for (int iy = 0; iy < dims_[1]; ++iy)
      for (int iz = 0; iz < dims_[2]; ++iz, ++v)
        x[v] = g[grid_index(valid_[0][ix], valid_[1][iy], valid_[2][iz])] *
               (deconv_[0][ix] * deconv_[1][iy] * deconv_[2][iz]);
  return x;
}

}  // namespace sartomo
