#pragma once

#include "sartomo/common.hpp"
#include "sartomo/field.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <vector>

namespace sartomo {

struct NetworkConfig {
  int num_frequencies = 9;      // rows of the Fourier feature matrix
  double fourier_scale = 0.25;  // std of the feature frequencies, normalized coordinates
  int num_layers = 8;           // hidden softplus layers
  int width = 512;
  int skip_layer = 4;           // 0-based hidden layer that also receives the embedding; <0 disables
  double softplus_beta = 100.0;
  bool literal_gaussian_init = false;  // N(0, 1) instead of N(0, 1/fan_in)

  void validate() const;
};

void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);

template <typename Scalar>
struct DenseLayer {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> weight;  // fan_out x fan_in
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> bias;
};

/// Learnable parameters, hidden layers first and the output layer last. The
/// same type accumulates gradients.
template <typename Scalar>
struct NetworkParams {
  std::vector<DenseLayer<Scalar>> layers;

  void set_zero();
  Eigen::Index size() const;
  bool all_finite() const;
  NetworkParams& operator+=(const NetworkParams& o);
  NetworkParams& operator*=(Scalar s);
  /// Flattened copy in checkpoint order (per layer: weight row-major, then bias).
  std::vector<Scalar> flatten() const;
  void unflatten(const std::vector<Scalar>& flat, std::size_t offset = 0);
};

/// Intermediate state of a batched value + Jacobian evaluation, kept for the
/// reverse pass.
template <typename Scalar>
struct ForwardCache {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Eigen::Index n = 0;
  std::vector<Matrix> inputs;          // per layer: [x | dx/du1 | dx/du2 | dx/du3]
  std::vector<Matrix> preactivations;  // per hidden layer, value and tangent blocks
  Matrix output;                       // 1 x 4n output pre-activation and its tangents
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> values;  // f
  Eigen::Matrix<Scalar, 3, Eigen::Dynamic> jacobians;  // df/dp
};

/// Coordinate network f(p) = d_max * tanh(MLP(gamma((p - center) / scale))),
/// gamma(u) = [cos(2 pi B u); sin(2 pi B u)], with softplus hidden layers and
/// the embedding re-injected at `skip_layer`. Spatial Jacobians and parameter
/// gradients (including through Jacobian-dependent losses) are analytic.
template <typename Scalar>
class SdfNetwork {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Points3 = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;
  using Point3 = Eigen::Matrix<Scalar, 3, 1>;

  /// Columns per GEMM in the value and Jacobian paths; every point is
  /// evaluated in an identically shaped product, so batching does not change
  /// results.
  static constexpr Eigen::Index kChunk = 64;

  SdfNetwork() = default;
  /// Random initialization; `bounds` fixes the input normalization and d_max.
  SdfNetwork(const NetworkConfig& config, const Aabb& bounds, std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  Scalar d_max() const { return d_max_; }
  Scalar scale() const { return scale_; }
  const Point3& center() const { return center_; }
  const Matrix& frequencies() const { return freq_; }
  const NetworkParams<Scalar>& params() const { return params_; }
  NetworkParams<Scalar>& params() { return params_; }
  NetworkParams<Scalar> zero_gradients() const;

  /// gamma(u) for normalized coordinates u.
  Matrix embed(const Points3& normalized) const;
  Points3 normalize(const Points3& points) const;

  Vector forward(const Points3& points) const;
  Scalar forward(const Point3& p) const;
  /// Values and Jacobians df/dp.
  void evaluate(const Points3& points, Vector& values, Points3& jacobians) const;
  Point3 jacobian(const Point3& p) const;

  /// Full-batch forward pass with tangents, retaining intermediates.
  ForwardCache<Scalar> forward_with_cache(const Points3& points) const;
  /// Accumulates dL/dparams into `grads` given dL/df (n) and dL/dJ (3 x n).
  void backward(const ForwardCache<Scalar>& cache, const Vector& grad_values, const Points3& grad_jacobians,
                NetworkParams<Scalar>& grads) const;
  NetworkParams<Scalar> backward(const Points3& points, const Vector& grad_values,
                                 const Points3& grad_jacobians) const;

  void save(const std::filesystem::path& path) const;
  static SdfNetwork load(const std::filesystem::path& path);

 private:
  void check_points(const Points3& points) const;
  void evaluate_chunk(const Points3& points, bool with_jacobian, Vector& values, Points3& jacobians) const;
  /// In place: value block (first n columns) -> softplus, tangent blocks
  /// scaled by softplus'.
  void activate(Matrix& a, Eigen::Index n, int blocks) const;
  /// softplus' and softplus'' of a pre-activation block.
  void activation_derivatives(const Matrix& pre, Matrix& d1, Matrix& d2) const;

  NetworkConfig config_;
  std::uint64_t seed_ = 0;
  Point3 center_ = Point3::Zero();
  Scalar scale_ = 1;
  Scalar d_max_ = 1;
  Matrix freq_;  // N_f x 3
  NetworkParams<Scalar> params_;
};

/// ImplicitField view of a double-precision network.
class NetworkField final : public ImplicitField {
 public:
  explicit NetworkField(const SdfNetwork<double>& net) : net_(net) {}
  void evaluate(const Points& points, Eigen::VectorXd& values, Points& gradients) const override {
    net_.evaluate(points, values, gradients);
  }
  Eigen::VectorXd values(const Points& points) const override { return net_.forward(points); }

 private:
  const SdfNetwork<double>& net_;
};

// ---------------------------------------------------------------- params

template <typename Scalar>
void NetworkParams<Scalar>::set_zero() {
  for (auto& l : layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
}

template <typename Scalar>
Eigen::Index NetworkParams<Scalar>::size() const {
  Eigen::Index n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

template <typename Scalar>
bool NetworkParams<Scalar>::all_finite() const {
  for (const auto& l : layers)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

template <typename Scalar>
NetworkParams<Scalar>& NetworkParams<Scalar>::operator+=(const NetworkParams& o) {
  require(o.layers.size() == layers.size(), ErrorCode::ShapeMismatch, "parameter sets differ in depth");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight += o.layers[i].weight;
    layers[i].bias += o.layers[i].bias;
  }
  return *this;
}

template <typename Scalar>
NetworkParams<Scalar>& NetworkParams<Scalar>::operator*=(Scalar s) {
  for (auto& l : layers) {
    l.weight *= s;
    l.bias *= s;
  }
  return *this;
}

template <typename Scalar>
std::vector<Scalar> NetworkParams<Scalar>::flatten() const {
  std::vector<Scalar> flat;
  flat.reserve(static_cast<std::size_t>(size()));
  for (const auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) flat.push_back(l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) flat.push_back(l.bias[r]);
  }
  return flat;
}

template <typename Scalar>
void NetworkParams<Scalar>::unflatten(const std::vector<Scalar>& flat, std::size_t offset) {
  require(flat.size() >= offset + static_cast<std::size_t>(size()), ErrorCode::ShapeMismatch,
          "parameter blob too short");
  std::size_t k = offset;
  for (auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = flat[k++];
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = flat[k++];
  }
}

// ---------------------------------------------------------------- network

template <typename Scalar>
SdfNetwork<Scalar>::SdfNetwork(const NetworkConfig& config, const Aabb& bounds, std::uint64_t seed)
    : config_(config), seed_(seed) {
  config_.validate();
  require((bounds.extent().array() > 0.0).all(), ErrorCode::InvalidArgument, "network bounds must have volume");
  center_ = bounds.center().cast<Scalar>();
  scale_ = static_cast<Scalar>(0.5 * bounds.extent().maxCoeff());
  d_max_ = static_cast<Scalar>(0.5 * bounds.diagonal());

  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int nf = config_.num_frequencies;
  freq_.resize(nf, 3);
  for (int r = 0; r < nf; ++r)
    for (int c = 0; c < 3; ++c) freq_(r, c) = static_cast<Scalar>(config_.fourier_scale * gauss(rng));

  const int embed_dim = 2 * nf;
  params_.layers.clear();
  for (int l = 0; l <= config_.num_layers; ++l) {
    const bool output = l == config_.num_layers;
    int fan_in = l == 0 ? embed_dim : config_.width;
    if (l == config_.skip_layer && l > 0 && !output) fan_in += embed_dim;
    const int fan_out = output ? 1 : config_.width;
    const double std = config_.literal_gaussian_init ? 1.0 : 1.0 / std::sqrt(static_cast<double>(fan_in));
    DenseLayer<Scalar> layer;
    layer.weight.resize(fan_out, fan_in);
    layer.bias.resize(fan_out);
    for (Eigen::Index r = 0; r < fan_out; ++r)
      for (Eigen::Index c = 0; c < fan_in; ++c) layer.weight(r, c) = static_cast<Scalar>(std * gauss(rng));
    for (Eigen::Index r = 0; r < fan_out; ++r) layer.bias[r] = static_cast<Scalar>(std * gauss(rng));
    params_.layers.push_back(std::move(layer));
  }
}

template <typename Scalar>
NetworkParams<Scalar> SdfNetwork<Scalar>::zero_gradients() const {
  NetworkParams<Scalar> g = params_;
  g.set_zero();
  return g;
}

// softplus(x) = max(x, 0) + log(1 + e) / beta and softplus'(x) = sigmoid(beta x),
// with e = exp(-beta |x|) in (0, 1] so nothing overflows.
template <typename Scalar>
void SdfNetwork<Scalar>::activate(Matrix& a, Eigen::Index n, int blocks) const {
  const Scalar b = static_cast<Scalar>(config_.softplus_beta);
  auto v = a.leftCols(n).array();
  const auto e = (-b * v.abs()).exp().eval();
  const auto inv = (Scalar(1) + e).inverse().eval();
  if (blocks > 1) {
    const auto d1 = (v >= Scalar(0)).select(inv, e * inv).eval();
    for (int k = 1; k < blocks; ++k) a.middleCols(k * n, n).array() *= d1;
  }
  v = v.max(Scalar(0)) + (Scalar(1) + e).log() / b;
}

template <typename Scalar>
void SdfNetwork<Scalar>::activation_derivatives(const Matrix& pre, Matrix& d1, Matrix& d2) const {
  const Scalar b = static_cast<Scalar>(config_.softplus_beta);
  const auto v = pre.array();
  const auto e = (-b * v.abs()).exp().eval();
  const auto inv = (Scalar(1) + e).inverse().eval();
  d1 = (v >= Scalar(0)).select(inv, e * inv).matrix();
  d2 = (b * d1.array() * (Scalar(1) - d1.array())).matrix();
}

template <typename Scalar>
void SdfNetwork<Scalar>::check_points(const Points3& points) const {
  require(points.allFinite(), ErrorCode::NonFinite, "non-finite input point");
  require(!params_.layers.empty(), ErrorCode::InvalidArgument, "network is not initialized");
}

template <typename Scalar>
typename SdfNetwork<Scalar>::Points3 SdfNetwork<Scalar>::normalize(const Points3& points) const {
  return (points.colwise() - center_) / scale_;
}

template <typename Scalar>
typename SdfNetwork<Scalar>::Matrix SdfNetwork<Scalar>::embed(const Points3& normalized) const {
  const Eigen::Index nf = freq_.rows();
  const Matrix z = (Scalar(2 * kPi) * freq_) * normalized;
  Matrix g(2 * nf, normalized.cols());
  g.topRows(nf) = z.array().cos().matrix();
  g.bottomRows(nf) = z.array().sin().matrix();
  return g;
}

template <typename Scalar>
void SdfNetwork<Scalar>::evaluate_chunk(const Points3& points, bool with_jacobian, Vector& values,
                                        Points3& jacobians) const {
  // points holds exactly kChunk columns.
  const Eigen::Index n = points.cols();
  const Eigen::Index nf = freq_.rows();
  const int blocks = with_jacobian ? 4 : 1;
  const Points3 u = normalize(points);
  const Matrix z = (Scalar(2 * kPi) * freq_) * u;

  // Embedding and its derivative along each normalized input axis.
  Matrix gamma(2 * nf, blocks * n);
  gamma.block(0, 0, nf, n) = z.array().cos().matrix();
  gamma.block(nf, 0, nf, n) = z.array().sin().matrix();
  if (with_jacobian) {
    for (int k = 0; k < 3; ++k) {
      const auto w = (Scalar(2 * kPi) * freq_.col(k)).array();
      gamma.block(0, (k + 1) * n, nf, n) = -(z.array().sin().colwise() * w).matrix();
      gamma.block(nf, (k + 1) * n, nf, n) = (z.array().cos().colwise() * w).matrix();
    }
  }

  Matrix x = gamma;
  const int depth = config_.num_layers;
  for (int l = 0; l < depth; ++l) {
    const auto& layer = params_.layers[static_cast<std::size_t>(l)];
    if (l == config_.skip_layer && l > 0) {
      Matrix stacked(x.rows() + gamma.rows(), x.cols());
      stacked << x, gamma;
      x.swap(stacked);
    }
    Matrix a = layer.weight * x;
    a.leftCols(n).colwise() += layer.bias;
    activate(a, n, blocks);
    x.swap(a);
  }
  const auto& out = params_.layers.back();
  Matrix o = out.weight * x;
  values.resize(n);
  if (with_jacobian) jacobians.resize(3, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const Scalar t = std::tanh(o(0, c) + out.bias[0]);
    values[c] = d_max_ * t;
    if (with_jacobian) {
      const Scalar dt = d_max_ * (Scalar(1) - t * t) / scale_;
      for (int k = 0; k < 3; ++k) jacobians(k, c) = dt * o(0, (k + 1) * n + c);
    }
  }
}

template <typename Scalar>
typename SdfNetwork<Scalar>::Vector SdfNetwork<Scalar>::forward(const Points3& points) const {
  Vector v;
  Points3 j;
  check_points(points);
  Vector out(points.cols());
  Points3 chunk = Points3::Zero(3, kChunk);
  for (Eigen::Index begin = 0; begin < points.cols(); begin += kChunk) {
    const Eigen::Index len = std::min(kChunk, points.cols() - begin);
    chunk.setZero();
    chunk.leftCols(len) = points.middleCols(begin, len);
    evaluate_chunk(chunk, false, v, j);
    out.segment(begin, len) = v.head(len);
  }
  return out;
}

template <typename Scalar>
Scalar SdfNetwork<Scalar>::forward(const Point3& p) const {
  return forward(Points3(p))[0];
}

template <typename Scalar>
void SdfNetwork<Scalar>::evaluate(const Points3& points, Vector& values, Points3& jacobians) const {
  check_points(points);
  values.resize(points.cols());
  jacobians.resize(3, points.cols());
  Vector v;
  Points3 j;
  Points3 chunk = Points3::Zero(3, kChunk);
  for (Eigen::Index begin = 0; begin < points.cols(); begin += kChunk) {
    const Eigen::Index len = std::min(kChunk, points.cols() - begin);
    chunk.setZero();
    chunk.leftCols(len) = points.middleCols(begin, len);
    evaluate_chunk(chunk, true, v, j);
    values.segment(begin, len) = v.head(len);
    jacobians.middleCols(begin, len) = j.leftCols(len);
  }
}

template <typename Scalar>
typename SdfNetwork<Scalar>::Point3 SdfNetwork<Scalar>::jacobian(const Point3& p) const {
  Vector v;
  Points3 j;
  evaluate(Points3(p), v, j);
  return j.col(0);
}

template <typename Scalar>
ForwardCache<Scalar> SdfNetwork<Scalar>::forward_with_cache(const Points3& points) const {
  check_points(points);
  ForwardCache<Scalar> cache;
  const Eigen::Index n = points.cols();
  const Eigen::Index nf = freq_.rows();
  cache.n = n;
  const Points3 u = normalize(points);
  const Matrix z = (Scalar(2 * kPi) * freq_) * u;
  Matrix gamma(2 * nf, 4 * n);
  gamma.block(0, 0, nf, n) = z.array().cos().matrix();
  gamma.block(nf, 0, nf, n) = z.array().sin().matrix();
  for (int k = 0; k < 3; ++k) {
    const auto w = (Scalar(2 * kPi) * freq_.col(k)).array();
    gamma.block(0, (k + 1) * n, nf, n) = -(z.array().sin().colwise() * w).matrix();
    gamma.block(nf, (k + 1) * n, nf, n) = (z.array().cos().colwise() * w).matrix();
  }

  const int depth = config_.num_layers;
  cache.inputs.reserve(static_cast<std::size_t>(depth + 1));
  cache.preactivations.reserve(static_cast<std::size_t>(depth));
  Matrix x = gamma;
  for (int l = 0; l < depth; ++l) {
    const auto& layer = params_.layers[static_cast<std::size_t>(l)];
    if (l == config_.skip_layer && l > 0) {
      Matrix stacked(x.rows() + gamma.rows(), x.cols());
      stacked << x, gamma;
      x.swap(stacked);
    }
    Matrix a = layer.weight * x;
    a.leftCols(n).colwise() += layer.bias;
    cache.preactivations.push_back(a);
    activate(a, n, 4);
    cache.inputs.push_back(std::move(x));
    x = std::move(a);
  }
  const auto& out = params_.layers.back();
  cache.output = out.weight * x;
  cache.output.leftCols(n).array() += out.bias[0];
  cache.inputs.push_back(std::move(x));

  cache.values.resize(n);
  cache.jacobians.resize(3, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const Scalar t = std::tanh(cache.output(0, c));
    cache.values[c] = d_max_ * t;
    const Scalar dt = d_max_ * (Scalar(1) - t * t) / scale_;
    for (int k = 0; k < 3; ++k) cache.jacobians(k, c) = dt * cache.output(0, (k + 1) * n + c);
  }
  return cache;
}

template <typename Scalar>
void SdfNetwork<Scalar>::backward(const ForwardCache<Scalar>& cache, const Vector& grad_values,
                                  const Points3& grad_jacobians, NetworkParams<Scalar>& grads) const {
  const Eigen::Index n = cache.n;
  require(grad_values.size() == n && grad_jacobians.cols() == n, ErrorCode::ShapeMismatch,
          "backward: upstream sensitivities do not match the batch");
  require(grads.layers.size() == params_.layers.size(), ErrorCode::ShapeMismatch,
          "backward: gradient buffer does not match the network");
  require(grad_values.allFinite() && grad_jacobians.allFinite(), ErrorCode::NonFinite,
          "backward: non-finite upstream sensitivities");

  // Output: f = d tanh(o), J = d (1 - t^2) o_k / scale.
  Matrix o_bar(1, 4 * n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const Scalar t = std::tanh(cache.output(0, c));
    const Scalar sech2 = Scalar(1) - t * t;
    Scalar acc = grad_values[c] * d_max_ * sech2;
    for (int k = 0; k < 3; ++k) {
      const Scalar gj = grad_jacobians(k, c) / scale_;
      acc += gj * d_max_ * Scalar(-2) * t * sech2 * cache.output(0, (k + 1) * n + c);
      o_bar(0, (k + 1) * n + c) = gj * d_max_ * sech2;
    }
    o_bar(0, c) = acc;
  }
  const int depth = config_.num_layers;
  {
    auto& g = grads.layers.back();
    const Matrix& x = cache.inputs[static_cast<std::size_t>(depth)];
    g.weight.noalias() += o_bar * x.transpose();
    g.bias[0] += o_bar.leftCols(n).sum();
  }
  Matrix h_bar = params_.layers.back().weight.transpose() * o_bar;

  for (int l = depth - 1; l >= 0; --l) {
    const auto& pre = cache.preactivations[static_cast<std::size_t>(l)];
    // Reverse through h = sp(a), dh_k = sp'(a) da_k.
    Matrix d1, d2;
    activation_derivatives(pre.leftCols(n), d1, d2);
    Matrix a_bar(h_bar.rows(), 4 * n);
    Matrix second = Matrix::Zero(h_bar.rows(), n);
    for (int k = 1; k < 4; ++k) {
      a_bar.middleCols(k * n, n) = (d1.array() * h_bar.middleCols(k * n, n).array()).matrix();
      second.array() += pre.middleCols(k * n, n).array() * h_bar.middleCols(k * n, n).array();
    }
    a_bar.leftCols(n) = (d1.array() * h_bar.leftCols(n).array() + d2.array() * second.array()).matrix();
    auto& g = grads.layers[static_cast<std::size_t>(l)];
    const Matrix& x = cache.inputs[static_cast<std::size_t>(l)];
    g.weight.noalias() += a_bar * x.transpose();
    g.bias += a_bar.leftCols(n).rowwise().sum();
    if (l == 0) break;
    Matrix x_bar = params_.layers[static_cast<std::size_t>(l)].weight.transpose() * a_bar;
    if (l == config_.skip_layer) {
      // Drop the embedding part; the embedding has no parameters.
      h_bar = x_bar.topRows(config_.width);
    } else {
      h_bar.swap(x_bar);
    }
  }
}

template <typename Scalar>
NetworkParams<Scalar> SdfNetwork<Scalar>::backward(const Points3& points, const Vector& grad_values,
                                                   const Points3& grad_jacobians) const {
  NetworkParams<Scalar> grads = zero_gradients();
  backward(forward_with_cache(points), grad_values, grad_jacobians, grads);
  return grads;
}

extern template struct NetworkParams<double>;
extern template class SdfNetwork<double>;

}  // namespace sartomo
