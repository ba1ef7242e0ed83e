#pragma once

#include "sartomo/common.hpp"
#include "sartomo/surface.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <filesystem>
#include <vector>

namespace sartomo {

/// Unit vector from the scene toward the sensor for azimuth `az` (from +x in
/// the xy-plane) and elevation `el` (from the xy-plane), radians.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> look_vector(Scalar az, Scalar el) {
  using std::cos;
  using std::sin;
  return {cos(az) * cos(el), sin(az) * cos(el), sin(el)};
}

/// exp(-j (4 pi f / c) <p, look(az, el)>): the two-way phase of a point
/// reflector at p seen at frequency f.
template <typename Scalar>
std::complex<Scalar> steering_phase(const Eigen::Matrix<Scalar, 3, 1>& p, Scalar f, Scalar az, Scalar el,
                                    Scalar c = Scalar(kSpeedOfLight)) {
  const Scalar k = Scalar(4) * Scalar(kPi) * f / c;
  return std::polar(Scalar(1), -k * p.dot(look_vector(az, el)));
}

struct Pulse {
  int j = 0;  // pulse index within the pass
  int e = 0;  // elevation pass
};

/// Circular-aperture collection settings (angles in degrees, frequencies in Hz).
struct GeometryConfig {
  double center_frequency = 9.6e9;
  double bandwidth = 640e6;
  int num_frequencies = 64;
  double azimuth_start_deg = 0.0;
  double azimuth_stop_deg = 360.0;
  int pulses_per_pass = 128;
  std::vector<double> elevations_deg = {20, 21, 22, 23, 24, 25, 26, 27};
  double subaperture_span_deg = 5.0;
  bool group_passes = false;  // one sub-aperture per azimuth bin across all passes
};

void to_json(nlohmann::json& j, const GeometryConfig& g);
void from_json(const nlohmann::json& j, GeometryConfig& g);

struct CollectionGeometry {
  Eigen::VectorXd frequencies;     // N_F, strictly increasing
  Eigen::MatrixXd azimuth;         // N_P x N_el, radians
  Eigen::MatrixXd elevation;       // N_P x N_el, radians
  Eigen::MatrixXi subaperture;     // N_P x N_el, index into the means below
  Eigen::VectorXd mean_azimuth;    // N_s
  Eigen::VectorXd mean_elevation;  // N_s
  double c = kSpeedOfLight;

  int num_frequencies() const { return static_cast<int>(frequencies.size()); }
  int num_pulses() const { return static_cast<int>(azimuth.rows()); }
  int num_passes() const { return static_cast<int>(azimuth.cols()); }
  int num_subapertures() const { return static_cast<int>(mean_azimuth.size()); }

  /// Pulses belonging to sub-aperture m, ordered by (e, j).
  std::vector<Pulse> members(int m) const;
  Vec3 look(int m) const { return look_vector(mean_azimuth[m], mean_elevation[m]); }

  /// Recomputes the sub-aperture means from the assignment.
  void update_means();
  /// Throws InvalidArgument when any invariant fails.
  void validate() const;
};

void to_json(nlohmann::json& j, const CollectionGeometry& g);
void from_json(const nlohmann::json& j, CollectionGeometry& g);

CollectionGeometry make_geometry(const GeometryConfig& config);

/// Complex phase history cube, samples(i, j, e) stored row-major.
struct PhaseHistory {
  CollectionGeometry geometry;
  Eigen::VectorXcd samples;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  std::size_t index(int i, int j, int e) const {
    return (static_cast<std::size_t>(i) * geometry.num_pulses() + j) * geometry.num_passes() + e;
  }
  cdouble operator()(int i, int j, int e) const { return samples[static_cast<Eigen::Index>(index(i, j, e))]; }
};

void save_phase_history(const std::filesystem::path& path, const PhaseHistory& ph);
PhaseHistory load_phase_history(const std::filesystem::path& path);

struct ScatteringCenter {
  Vec3 position = Vec3::Zero();
  Eigen::VectorXcd coeffs;  // one per sub-aperture
};

struct Scene {
  SurfacePtr surface;
  std::vector<ScatteringCenter> scatterers;
  Aabb bounds;
};

enum class CoeffModel {
  Constant,     // identical unit-magnitude coefficient in every sub-aperture
  Persistence,  // zero where the mean look direction sees the back side
};

CoeffModel coeff_model_from_string(const std::string& name);

/// True when some sub-aperture looks at a surface element with this outward
/// normal, i.e. when the persistence model would let it scatter.
bool faces_any_subaperture(const CollectionGeometry& geometry, const Vec3& normal);

/// Draws K scatterers on the surface. Random phases, unit magnitude.
Scene sample_scene(SurfacePtr surface, int count, CoeffModel model, const CollectionGeometry& geometry,
                   std::uint64_t seed);

/// Sum over scatterers of coefficient x steering phase, plus circular complex
/// Gaussian noise with E|n|^2 = noise_sigma^2. Noise streams are keyed per
/// pulse, so results do not depend on the thread count.
PhaseHistory simulate_phase_history(const Scene& scene, const CollectionGeometry& geometry, double noise_sigma,
                                    std::uint64_t seed);

}  // namespace sartomo
