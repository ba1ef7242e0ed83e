#pragma once

#include "sartomo/iso_sampler.hpp"
#include "sartomo/pointcloud.hpp"
#include "sartomo/sdf_network.hpp"
#include "sartomo/surface.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace sartomo {

struct LossWeights {
  double iso_sdf = 1.0;
  double iso_normal = 0.1;
  double eikonal = 0.1;
  double on_sdf = 1.0;
  double normal = 0.1;
  double off_sdf = 0.1;
  double alpha_off = 100.0;  // sharpness of exp(-alpha |f|)
  /// Training-point normals are oriented (outward), so the normal term uses
  /// 1 - SC instead of 1 - |SC|. This fixes the inside/outside sign, which the
  /// absolute form leaves free. Iso-point normals are always compared
  /// unsigned since PCA gives no orientation.
  bool oriented_normals = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

struct TrainConfig {
  int steps = 2000;
  int batch_size = 4096;          // per point set
  double learning_rate = 1e-3;    // halved every third of training
  int iso_refresh_every = 200;    // steps; the first refresh happens at this step
  int iso_points = 1000;
  bool iso_enabled = true;
  double box_padding = 0.1;       // Q_b box = cloud bbox inflated by this fraction
  int log_every = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// One step's worth of samples. Normals need not be unit length.
struct TrainingBatch {
  Points surface;          // P
  Points surface_normals;
  Points iso;              // Q_iso (may be empty)
  Points iso_normals;
  Points background;       // Q_b
};

struct LossTerms {
  double iso_sdf = 0.0;
  double iso_normal = 0.0;
  double eikonal = 0.0;
  double on_sdf = 0.0;
  double normal = 0.0;
  double off_sdf = 0.0;
  double total = 0.0;

  /// Throws NonFinite naming the first non-finite term.
  void check_finite() const;
};

/// Weighted six-term objective. Terms whose set is empty are zero; the
/// Eikonal mean runs over Q_b and Q_iso together.
LossTerms loss_terms(const SdfNetwork<double>& net, const TrainingBatch& batch, const LossWeights& weights);
LossTerms loss_terms(const ImplicitField& field, const TrainingBatch& batch, const LossWeights& weights);

/// Loss terms and the gradient of the total with respect to every parameter.
/// Per-sample work is split into fixed shards reduced in order, so the result
/// does not depend on the thread count.
LossTerms loss_and_gradient(const SdfNetwork<double>& net, const TrainingBatch& batch, const LossWeights& weights,
                            NetworkParams<double>& gradient);

/// Adaptive moment estimation over NetworkParams.
class Adam {
 public:
  explicit Adam(const NetworkParams<double>& shape, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(NetworkParams<double>& params, const NetworkParams<double>& grad, double lr);
  int iterations() const { return t_; }

 private:
  NetworkParams<double> m_, v_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
};

/// Learning rate at `step`: halved after every third of `total` steps.
double scheduled_learning_rate(double base, int step, int total);

/// Iso-point normals by local PCA within `radius`, falling back to the
/// normalized Jacobian stored in the set.
Points iso_point_normals(const IsoPointSet& iso, double radius);

struct HistoryRow {
  int step = 0;
  LossTerms terms;
  double lr = 0.0;
  int iso_points = 0;
};

struct TrainResult {
  SdfNetwork<double> net;       // after the last step
  NetworkParams<double> best;   // lowest total loss seen
  int best_step = 0;
  double best_loss = 0.0;
  std::vector<HistoryRow> history;
  int iso_refreshes = 0;
  int iso_failures = 0;  // refreshes that found no zero-level set
};

/// Minibatch Adam on the six-term objective. P batches come from the cloud,
/// Q_b is redrawn uniformly every step, and Q_iso is refreshed every
/// iso_refresh_every steps when enabled. On a non-finite loss the last good
/// parameters are written to `failure_checkpoint` (if given) and Diverged is
/// thrown.
TrainResult train(SdfNetwork<double> net, const OrientedPointCloud& cloud, const TrainConfig& config,
                  const LossWeights& weights, const std::filesystem::path& failure_checkpoint = {},
                  const std::function<void(const HistoryRow&)>& progress = {});

/// Region the trainer samples Q_b from and normalizes the network to.
Aabb training_region(const OrientedPointCloud& cloud, double padding);

void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& history);

struct ValidationReport {
  double chamfer = 0.0;          // m
  double on_surface_rms = 0.0;   // RMS f over observable ground-truth samples
  double on_surface_rms_all = 0.0;  // same over every ground-truth sample
  double eikonal_mean = 0.0;     // mean | ||J|| - 1 | over uniform box samples
  double normal_rms_deg = 0.0;   // RMS angle between J and true normals, sign-agnostic
  int iso_points = 0;
  int samples = 0;
  int observable_samples = 0;
};

/// Whether a ground-truth point with this outward normal could have produced
/// data. Empty means every point counts.
using ObservableFn = std::function<bool(const Vec3& normal)>;

void to_json(nlohmann::json& j, const ValidationReport& r);

/// Iso-points of `field` seeded uniformly in `box`: projection, one repulsion
/// pass and upsampling to `target`.
IsoPointSet extract_iso_points(const ImplicitField& field, const Aabb& box, int target, std::uint64_t seed);

/// Compares the field's zero-level set with a ground-truth surface. Chamfer is
/// 0.5 * (mean over iso-points of |sdf_true(q)| + mean over true samples g of
/// the distance from g to the field's surface), the latter measured by
/// Newton-projecting g, or to the nearest iso-point when projection fails.
/// When the field has no zero set in `box`, distances are capped at the box
/// diagonal. The truth-side distance, on-surface RMS and normal error only
/// use samples passing `observable`; faces no sensor ever saw would otherwise
/// score the network's hole filling. The iso-points used are handed back
/// through `iso_out`.
ValidationReport validate_field(const ImplicitField& field, const Surface& truth, const Aabb& box, int samples,
                                std::uint64_t seed, const ObservableFn& observable = {},
                                IsoPointSet* iso_out = nullptr);

}  // namespace sartomo
