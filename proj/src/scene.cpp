#include "sartomo/scene.hpp"

#include "sartomo/container.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace sartomo {

namespace {
constexpr double kDeg = kPi / 180.0;

template <typename Derived>
nlohmann::json matrix_to_json(const Eigen::DenseBase<Derived>& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename Matrix>
Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    require(static_cast<Eigen::Index>(j[r].size()) == cols, ErrorCode::ShapeMismatch, "ragged matrix in geometry");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<typename Matrix::Scalar>();
  }
  return m;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
  return v;
}
}  // namespace

// ------------------------------------------------------------ configuration

void to_json(nlohmann::json& j, const GeometryConfig& g) {
  j = {{"center_frequency", g.center_frequency}, {"bandwidth", g.bandwidth},
       {"num_frequencies", g.num_frequencies},   {"azimuth_start_deg", g.azimuth_start_deg},
       {"azimuth_stop_deg", g.azimuth_stop_deg}, {"pulses_per_pass", g.pulses_per_pass},
       {"elevations_deg", g.elevations_deg},     {"subaperture_span_deg", g.subaperture_span_deg},
       {"group_passes", g.group_passes}};
}

void from_json(const nlohmann::json& j, GeometryConfig& g) {
  static const std::vector<std::string> keys = {"center_frequency", "bandwidth",        "num_frequencies",
                                                "azimuth_start_deg", "azimuth_stop_deg", "pulses_per_pass",
                                                "elevations_deg",    "subaperture_span_deg", "group_passes"};
  for (const auto& [key, _] : j.items())
    require(std::find(keys.begin(), keys.end(), key) != keys.end(), ErrorCode::Config,
            "unknown geometry key '" + key + "'");
  g.center_frequency = j.value("center_frequency", g.center_frequency);
  g.bandwidth = j.value("bandwidth", g.bandwidth);
  g.num_frequencies = j.value("num_frequencies", g.num_frequencies);
  g.azimuth_start_deg = j.value("azimuth_start_deg", g.azimuth_start_deg);
  g.azimuth_stop_deg = j.value("azimuth_stop_deg", g.azimuth_stop_deg);
  g.pulses_per_pass = j.value("pulses_per_pass", g.pulses_per_pass);
  g.elevations_deg = j.value("elevations_deg", g.elevations_deg);
  g.subaperture_span_deg = j.value("subaperture_span_deg", g.subaperture_span_deg);
  g.group_passes = j.value("group_passes", g.group_passes);
}

// ------------------------------------------------------------ geometry

std::vector<Pulse> CollectionGeometry::members(int m) const {
  std::vector<Pulse> out;
  for (int e = 0; e < num_passes(); ++e)
    for (int j = 0; j < num_pulses(); ++j)
      if (subaperture(j, e) == m) out.push_back({j, e});
  return out;
}

void CollectionGeometry::update_means() {
  const int ns = subaperture.size() ? subaperture.maxCoeff() + 1 : 0;
  mean_azimuth = Eigen::VectorXd::Zero(ns);
  mean_elevation = Eigen::VectorXd::Zero(ns);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(ns);
  for (int e = 0; e < num_passes(); ++e) {
    for (int j = 0; j < num_pulses(); ++j) {
      const int m = subaperture(j, e);
      mean_azimuth[m] += azimuth(j, e);
      mean_elevation[m] += elevation(j, e);
      count[m] += 1.0;
    }
  }
  mean_azimuth.array() /= count.array();
  mean_elevation.array() /= count.array();
}

void CollectionGeometry::validate() const {
  require(frequencies.size() > 0, ErrorCode::InvalidArgument, "geometry has no frequencies");
  require((frequencies.array() > 0.0).all(), ErrorCode::InvalidArgument, "frequencies must be positive");
  for (Eigen::Index i = 1; i < frequencies.size(); ++i)
    require(frequencies[i] > frequencies[i - 1], ErrorCode::InvalidArgument, "frequencies must be strictly increasing");
  require(azimuth.size() > 0 && azimuth.rows() == elevation.rows() && azimuth.cols() == elevation.cols() &&
              subaperture.rows() == azimuth.rows() && subaperture.cols() == azimuth.cols(),
          ErrorCode::ShapeMismatch, "geometry pulse arrays disagree in shape");
  require(subaperture.minCoeff() >= 0 && subaperture.maxCoeff() < num_subapertures(), ErrorCode::InvalidArgument,
          "sub-aperture index out of range");
  require(c > 0.0, ErrorCode::InvalidArgument, "speed of light must be positive");
  std::vector<int> count(static_cast<std::size_t>(num_subapertures()), 0);
  for (Eigen::Index k = 0; k < subaperture.size(); ++k) ++count[static_cast<std::size_t>(subaperture.data()[k])];
  for (int n : count) require(n > 0, ErrorCode::InvalidArgument, "empty sub-aperture");
}

void to_json(nlohmann::json& j, const CollectionGeometry& g) {
  j = {{"frequencies", std::vector<double>(g.frequencies.data(), g.frequencies.data() + g.frequencies.size())},
       {"azimuth", matrix_to_json(g.azimuth)},
       {"elevation", matrix_to_json(g.elevation)},
       {"subaperture", matrix_to_json(g.subaperture)},
       {"mean_azimuth", std::vector<double>(g.mean_azimuth.data(), g.mean_azimuth.data() + g.mean_azimuth.size())},
       {"mean_elevation",
        std::vector<double>(g.mean_elevation.data(), g.mean_elevation.data() + g.mean_elevation.size())},
       {"c", g.c}};
}

void from_json(const nlohmann::json& j, CollectionGeometry& g) {
  g.frequencies = vector_from_json(j.at("frequencies"));
  g.azimuth = matrix_from_json<Eigen::MatrixXd>(j.at("azimuth"));
  g.elevation = matrix_from_json<Eigen::MatrixXd>(j.at("elevation"));
  g.subaperture = matrix_from_json<Eigen::MatrixXi>(j.at("subaperture"));
  g.mean_azimuth = vector_from_json(j.at("mean_azimuth"));
  g.mean_elevation = vector_from_json(j.at("mean_elevation"));
  g.c = j.at("c").get<double>();
  g.validate();
}

CollectionGeometry make_geometry(const GeometryConfig& cfg) {
  require(cfg.num_frequencies >= 1 && cfg.pulses_per_pass >= 1 && !cfg.elevations_deg.empty(),
          ErrorCode::InvalidArgument, "geometry needs frequencies, pulses and at least one pass");
  require(cfg.center_frequency > 0.0 && cfg.bandwidth > 0.0 && cfg.center_frequency > 0.5 * cfg.bandwidth,
          ErrorCode::InvalidArgument, "invalid center frequency / bandwidth");
  const double range = cfg.azimuth_stop_deg - cfg.azimuth_start_deg;
  require(range > 0.0, ErrorCode::InvalidArgument, "azimuth range must be positive");
  require(cfg.subaperture_span_deg > 0.0, ErrorCode::InvalidArgument, "sub-aperture span must be positive");
  require(cfg.subaperture_span_deg <= range * (1.0 + 1e-12), ErrorCode::InvalidArgument,
          "sub-aperture span larger than azimuth range");

  CollectionGeometry g;
  const int nf = cfg.num_frequencies;
  const double df = cfg.bandwidth / nf;
  g.frequencies.resize(nf);
  for (int i = 0; i < nf; ++i) g.frequencies[i] = cfg.center_frequency + (i - 0.5 * nf + 0.5) * df;

  const int np = cfg.pulses_per_pass;
  const int nel = static_cast<int>(cfg.elevations_deg.size());
  const int bins = std::max(1, static_cast<int>(std::ceil(range / cfg.subaperture_span_deg - 1e-9)));
  g.azimuth.resize(np, nel);
  g.elevation.resize(np, nel);
  g.subaperture.resize(np, nel);

  // Contiguous azimuth bins, per pass unless passes are grouped; empty bins
  // are dropped when numbering.
  std::map<std::pair<int, int>, int> ids;
  for (int e = 0; e < nel; ++e) {
    for (int j = 0; j < np; ++j) {
      const double az_deg = cfg.azimuth_start_deg + (j + 0.5) * range / np;
      const int bin = std::min(bins - 1, static_cast<int>(std::floor((az_deg - cfg.azimuth_start_deg) /
                                                                     cfg.subaperture_span_deg)));
      g.azimuth(j, e) = az_deg * kDeg;
      g.elevation(j, e) = cfg.elevations_deg[static_cast<std::size_t>(e)] * kDeg;
      ids.emplace(std::make_pair(cfg.group_passes ? 0 : e, bin), 0);
      g.subaperture(j, e) = bin;  // provisional
    }
  }
  int next = 0;
  for (auto& [key, id] : ids) id = next++;
  for (int e = 0; e < nel; ++e)
    for (int j = 0; j < np; ++j) g.subaperture(j, e) = ids.at({cfg.group_passes ? 0 : e, g.subaperture(j, e)});
  g.update_means();
  g.validate();
  return g;
}

// ------------------------------------------------------------ phase history IO

void save_phase_history(const std::filesystem::path& path, const PhaseHistory& ph) {
  nlohmann::json header;
  header["kind"] = "phase_history";
  header["layout"] = "complex128 interleaved (re, im), row-major (frequency, pulse, pass)";
  header["dims"] = {ph.geometry.num_frequencies(), ph.geometry.num_pulses(), ph.geometry.num_passes()};
  header["geometry"] = ph.geometry;
  header["noise_sigma"] = ph.noise_sigma;
  header["seed"] = ph.seed;
  const auto* raw = reinterpret_cast<const double*>(ph.samples.data());
  write_container(path, std::move(header), {raw, static_cast<std::size_t>(2 * ph.samples.size())});
}

PhaseHistory load_phase_history(const std::filesystem::path& path) {
  auto c = read_container(path, "phase_history");
  PhaseHistory ph;
  ph.geometry = c.header.at("geometry").get<CollectionGeometry>();
  ph.noise_sigma = c.header.at("noise_sigma").get<double>();
  ph.seed = c.header.at("seed").get<std::uint64_t>();
  const std::size_t n = static_cast<std::size_t>(ph.geometry.num_frequencies()) * ph.geometry.num_pulses() *
                        ph.geometry.num_passes();
  require(c.payload.size() == 2 * n, ErrorCode::ShapeMismatch, "phase history payload size disagrees with geometry");
  ph.samples.resize(static_cast<Eigen::Index>(n));
  std::copy(c.payload.begin(), c.payload.end(), reinterpret_cast<double*>(ph.samples.data()));
  return ph;
}

// ------------------------------------------------------------ scenes

CoeffModel coeff_model_from_string(const std::string& name) {
  if (name == "constant") return CoeffModel::Constant;
  if (name == "persistence") return CoeffModel::Persistence;
  throw Error(ErrorCode::InvalidArgument, "unknown coefficient model '" + name + "'");
}

bool faces_any_subaperture(const CollectionGeometry& geometry, const Vec3& normal) {
  for (int m = 0; m < geometry.num_subapertures(); ++m)
    if (geometry.look(m).dot(normal) > 0.0) return true;
  return false;
}

Scene sample_scene(SurfacePtr surface, int count, CoeffModel model, const CollectionGeometry& geometry,
                   std::uint64_t seed) {
  require(surface != nullptr, ErrorCode::InvalidArgument, "scene needs a surface");
  require(count >= 1, ErrorCode::InvalidArgument, "scene needs at least one scatterer");
  Scene scene;
  scene.surface = surface;
  scene.bounds = surface->bounds().inflated(0.2);
  Rng rng(derive_seed(seed, 0x5ce7e));
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  const int ns = geometry.num_subapertures();
  scene.scatterers.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    auto [p, n] = surface->sample(rng);
    const cdouble s = std::polar(1.0, phase(rng));
    ScatteringCenter sc{p, Eigen::VectorXcd::Constant(ns, s)};
    if (model == CoeffModel::Persistence) {
      for (int m = 0; m < ns; ++m)
        if (geometry.look(m).dot(n) <= 0.0) sc.coeffs[m] = 0.0;
    }
    scene.scatterers.push_back(std::move(sc));
  }
  return scene;
}

PhaseHistory simulate_phase_history(const Scene& scene, const CollectionGeometry& geometry, double noise_sigma,
                                    std::uint64_t seed) {
  require(!scene.scatterers.empty(), ErrorCode::EmptyScene, "empty scene");
  geometry.validate();
  require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), ErrorCode::InvalidArgument,
          "noise sigma must be finite and non-negative");
  for (const auto& s : scene.scatterers)
    require(s.coeffs.size() == geometry.num_subapertures(), ErrorCode::ShapeMismatch,
            "scatterer coefficient count differs from the number of sub-apertures");

  PhaseHistory ph;
  ph.geometry = geometry;
  ph.noise_sigma = noise_sigma;
  ph.seed = seed;
  const int nf = geometry.num_frequencies(), np = geometry.num_pulses(), nel = geometry.num_passes();
  ph.samples = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(nf) * np * nel);

  const std::size_t pulses = static_cast<std::size_t>(np) * nel;
  parallel_for(pulses, [&](std::size_t begin, std::size_t end) {
    for (std::size_t idx = begin; idx < end; ++idx) {
      const int j = static_cast<int>(idx / nel), e = static_cast<int>(idx % nel);
      const int m = geometry.subaperture(j, e);
      const double az = geometry.azimuth(j, e), el = geometry.elevation(j, e);
      const Vec3 u = look_vector(az, el);
      for (const auto& s : scene.scatterers) {
        const cdouble coeff = s.coeffs[m];
        if (coeff == cdouble(0.0)) continue;
        const double r = s.position.dot(u);
        for (int i = 0; i < nf; ++i) {
          const double k = 4.0 * kPi * geometry.frequencies[i] / geometry.c;
          ph.samples[static_cast<Eigen::Index>(ph.index(i, j, e))] += coeff * std::polar(1.0, -k * r);
        }
      }
      if (noise_sigma > 0.0) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(e)));
        std::normal_distribution<double> g(0.0, noise_sigma / std::sqrt(2.0));
        for (int i = 0; i < nf; ++i) {
          const double re = g(rng);
          const double im = g(rng);
          ph.samples[static_cast<Eigen::Index>(ph.index(i, j, e))] += cdouble(re, im);
        }
      }
    }
  });
  return ph;
}

}  // namespace sartomo
