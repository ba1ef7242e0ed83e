#include "sartomo/common.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace sartomo {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::EmptyScene: return "EMPTY_SCENE";
    case ErrorCode::EmptyPointCloud: return "EMPTY_POINT_CLOUD";
    case ErrorCode::EmptyLevelSet: return "EMPTY_LEVEL_SET";
    case ErrorCode::IsoSurfaceNotFound: return "ISO_SURFACE_NOT_FOUND";
    case ErrorCode::NonFinite: return "NON_FINITE";
    case ErrorCode::ShapeMismatch: return "SHAPE_MISMATCH";
    case ErrorCode::Io: return "IO";
    case ErrorCode::Config: return "CONFIG";
    case ErrorCode::Diverged: return "DIVERGED";
    case ErrorCode::MissingArtifact: return "MISSING_ARTIFACT";
  }
  return "UNKNOWN";
}

namespace {
std::atomic<int> g_threads{0};
}

int thread_count() {
  if (const char* env = std::getenv("SARTOMO_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const int n = g_threads.load();
  if (n > 0) return n;
  return std::max(1u, std::thread::hardware_concurrency());
}

void set_thread_count(int n) { g_threads.store(n); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n);
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t b = w * chunk;
    const std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, &errors, w, b, e] {
      try {
        fn(b, e);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
}

}  // namespace sartomo
