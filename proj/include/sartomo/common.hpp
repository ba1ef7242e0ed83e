#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace sartomo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Points = Eigen::Matrix3Xd;  // one point per column
using cdouble = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfLight = 299792458.0;

/// Error categories surfaced by the CLI as machine-parseable codes.
enum class ErrorCode {
  InvalidArgument,
  EmptyScene,
  EmptyPointCloud,
  EmptyLevelSet,
  IsoSurfaceNotFound,
  NonFinite,
  ShapeMismatch,
  Io,
  Config,
  Diverged,
  MissingArtifact,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

/// Number of worker threads used by parallel sections. SARTOMO_THREADS wins
/// over anything set through set_thread_count().
int thread_count();
void set_thread_count(int n);

/// Runs fn(begin, end) over contiguous chunks of [0, n). Chunks are disjoint,
/// so callers writing only to their own slots get thread-count independent
/// results.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

/// SplitMix64 mixing step; used to derive independent stream seeds from
/// (seed, counter) pairs.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

using Rng = std::mt19937_64;

/// Axis-aligned box in meters.
struct Aabb {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 extent() const { return hi - lo; }
  double diagonal() const { return (hi - lo).norm(); }
  bool contains(const Vec3& p, double tol = 0.0) const {
    return (p.array() >= lo.array() - tol).all() && (p.array() <= hi.array() + tol).all();
  }
  Aabb inflated(double fraction) const {
    const Vec3 pad = 0.5 * fraction * extent();
    return {lo - pad, hi + pad};
  }
  Vec3 sample(Rng& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vec3 t(u(rng), u(rng), u(rng));
    return lo + (hi - lo).cwiseProduct(t);
  }
};

}  // namespace sartomo
