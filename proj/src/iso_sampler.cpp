#include "sartomo/iso_sampler.hpp"

#include "sartomo/kdtree.hpp"
#include "sartomo/ply.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sartomo {

void SamplerParams::validate() const {
  require(tau0 > 0 && epsilon > 0 && sigma_p > 0 && alpha > 0, ErrorCode::InvalidArgument,
          "sampler parameters must be positive");
  require(max_newton_iters >= 0 && tolerance > 0, ErrorCode::InvalidArgument, "bad Newton settings");
  require(uniform_box_fraction >= 0 && uniform_box_fraction < 1, ErrorCode::InvalidArgument,
          "uniform_box_fraction must be in [0, 1)");
  require((box.hi.array() > box.lo.array()).all(), ErrorCode::InvalidArgument, "sampler box must have volume");
}

SamplerParams SamplerParams::defaults(const Aabb& box, int target) {
  require(target > 0, ErrorCode::InvalidArgument, "target point count must be positive");
  const Vec3 e = box.extent();
  const double area = 2.0 * (e.x() * e.y() + e.y() * e.z() + e.z() * e.x());
  const double spacing = std::sqrt(area / target);
  SamplerParams p;
  p.box = box;
  p.tau0 = box.diagonal() / 20.0;
  p.epsilon = 2.0 * spacing;
  p.sigma_p = p.epsilon / std::sqrt(2.0);
  return p;
}

Vec3 clip_step(const Vec3& x, double tau0) {
  const double n = x.norm();
  if (n <= tau0) return x;
  return x * (tau0 / n);
}

ProjectionResult project_newton(const ImplicitField& field, const Points& starts, const SamplerParams& params) {
  require(starts.allFinite(), ErrorCode::NonFinite, "projection start points must be finite");
  const Eigen::Index n = starts.cols();
  ProjectionResult r;
  r.points = starts;
  r.status.assign(static_cast<std::size_t>(n), ProjectionStatus::NotConverged);
  r.iterations.assign(static_cast<std::size_t>(n), 0);
  r.values = Eigen::VectorXd::Zero(n);
  r.gradients = Points::Zero(3, n);

  std::vector<Eigen::Index> active(static_cast<std::size_t>(n));
  std::iota(active.begin(), active.end(), Eigen::Index{0});
  for (int it = 0; !active.empty(); ++it) {
    Points batch(3, static_cast<Eigen::Index>(active.size()));
    for (std::size_t k = 0; k < active.size(); ++k) batch.col(static_cast<Eigen::Index>(k)) = r.points.col(active[k]);
    Eigen::VectorXd f;
    Points J;
    field.evaluate(batch, f, J);
    std::vector<Eigen::Index> next;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const Eigen::Index i = active[k];
      const auto col = static_cast<Eigen::Index>(k);
      r.values[i] = f[col];
      r.gradients.col(i) = J.col(col);
      if (!std::isfinite(f[col]) || !J.col(col).allFinite()) {
        r.status[static_cast<std::size_t>(i)] = ProjectionStatus::DegenerateGradient;
        continue;
      }
      if (std::abs(f[col]) <= params.tolerance) {
        r.status[static_cast<std::size_t>(i)] = ProjectionStatus::Converged;
        continue;
      }
      const double g2 = J.col(col).squaredNorm();
      if (std::sqrt(g2) < 1e-9) {
        r.status[static_cast<std::size_t>(i)] = ProjectionStatus::DegenerateGradient;
        continue;
      }
      if (it == params.max_newton_iters) continue;  // NotConverged
      r.points.col(i) -= clip_step(Vec3(J.col(col) * (f[col] / g2)), params.tau0);
      r.iterations[static_cast<std::size_t>(i)] = it + 1;
      next.push_back(i);
    }
    active.swap(next);
  }
  return r;
}

IsoPointSet project_to_iso(const ImplicitField& field, const Points& starts, const SamplerParams& params) {
  const ProjectionResult r = project_newton(field, starts, params);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < starts.cols(); ++i)
    if (r.status[static_cast<std::size_t>(i)] == ProjectionStatus::Converged && params.box.contains(r.points.col(i)))
      keep.push_back(i);
  IsoPointSet iso;
  const auto m = static_cast<Eigen::Index>(keep.size());
  iso.points.resize(3, m);
  iso.normals.resize(3, m);
  iso.residuals.resize(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index i = keep[static_cast<std::size_t>(k)];
    iso.points.col(k) = r.points.col(i);
    iso.normals.col(k) = r.gradients.col(i).normalized();
    iso.residuals[k] = std::abs(r.values[i]);
  }
  return iso;
}

namespace {

// Neighbors within epsilon, excluding the point itself.
std::vector<std::vector<Eigen::Index>> neighborhoods(const Points& pts, double radius) {
  const KdTree tree(pts);
  std::vector<std::vector<Eigen::Index>> out(static_cast<std::size_t>(pts.cols()));
  parallel_for(out.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      auto nb = tree.radius_search(pts.col(static_cast<Eigen::Index>(i)), radius);
      std::erase(nb, static_cast<Eigen::Index>(i));
      out[i] = std::move(nb);
    }
  });
  return out;
}

}  // namespace

IsoPointSet resample_uniform(const IsoPointSet& iso, const ImplicitField& field, const SamplerParams& params) {
  params.validate();
  if (iso.size() == 0) return iso;
  const auto nbrs = neighborhoods(iso.points, params.epsilon);
  Points moved = iso.points;
  const double scale = params.alpha * params.sigma_p;
  for (Eigen::Index i = 0; i < iso.size(); ++i) {
    const Vec3 q = iso.points.col(i);
    Vec3 sum = Vec3::Zero();
    double wsum = 0.0;
    for (const Eigen::Index j : nbrs[static_cast<std::size_t>(i)]) {
      const Vec3 d = iso.points.col(j) - q;
      const double dist = d.norm();
      sum += density_weight(dist, params.sigma_p) * d / (dist + 1e-12);
      wsum += density_weight(dist, params.sigma_p);
    }
    // Crowded neighborhoods (total weight above one) are normalized so the
    // step never exceeds alpha * sigma_p.
    moved.col(i) = q - clip_step(scale * sum / std::max(1.0, wsum), params.tau0);
  }
  return project_to_iso(field, moved, params);
}

EarOffsets ear_offsets(const IsoPointSet& iso, const SamplerParams& params) {
  params.validate();
  require(iso.normals.cols() == iso.size(), ErrorCode::ShapeMismatch, "edge-aware resampling needs normals");
  const auto nbrs = neighborhoods(iso.points, params.epsilon);
  const double s2 = params.sigma_p * params.sigma_p;
  EarOffsets out{Points::Zero(3, iso.size()), Points::Zero(3, iso.size())};
  for (Eigen::Index i = 0; i < iso.size(); ++i) {
    const auto& nb = nbrs[static_cast<std::size_t>(i)];
    if (nb.empty()) continue;
    const Vec3 q = iso.points.col(i);
    // exp(-n_i . d_i / sigma_p^2), shifted by the smallest exponent so large
    // arguments cannot overflow; the shift cancels in the ratio.
    double min_arg = std::numeric_limits<double>::infinity();
    for (const Eigen::Index j : nb) min_arg = std::min(min_arg, iso.normals.col(j).dot(iso.points.col(j) - q) / s2);
    Vec3 edge_num = Vec3::Zero(), rep_num = Vec3::Zero();
    double edge_den = 0.0, rep_den = 0.0;
    for (const Eigen::Index j : nb) {
      const Vec3 d = iso.points.col(j) - q;
      const double phi = std::exp(-(iso.normals.col(j).dot(d) / s2 - min_arg));
      edge_num += phi * d;
      edge_den += phi;
      const double w = density_weight(d.norm(), params.sigma_p);
      rep_num += w * d;
      rep_den += w;
    }
    out.edge.col(i) = edge_num / (edge_den + 1e-12);
    out.repulsion.col(i) = 0.5 * rep_num / (rep_den + 1e-12);
  }
  return out;
}

IsoPointSet resample_edge_aware(const IsoPointSet& iso, const ImplicitField& field, const SamplerParams& params) {
  if (iso.size() == 0) return iso;
  const EarOffsets off = ear_offsets(iso, params);
  Points moved = iso.points;
  // The edge term moves q toward the normal-weighted centroid of its
  // neighbors, which lies on q's own face and so away from creases.
  for (Eigen::Index i = 0; i < iso.size(); ++i)
    moved.col(i) += clip_step(off.edge.col(i), params.tau0) - clip_step(off.repulsion.col(i), params.tau0);
  return project_to_iso(field, moved, params);
}

IsoPointSet upsample(const IsoPointSet& iso, const ImplicitField& field, const SamplerParams& params, int target) {
  params.validate();
  require(target >= iso.size(), ErrorCode::InvalidArgument, "upsample target is below the current count");
  IsoPointSet cur = iso;
  while (cur.size() < target) {
    const KdTree tree(cur.points);
    // Priority: distance to the farthest neighbor within epsilon.
    std::vector<std::pair<double, Eigen::Index>> priority;
    std::vector<Eigen::Index> farthest(static_cast<std::size_t>(cur.size()), -1);
    for (Eigen::Index i = 0; i < cur.size(); ++i) {
      double best = -1.0;
      for (const Eigen::Index j : tree.radius_search(cur.points.col(i), params.epsilon)) {
        if (j == i) continue;
        const double d = (cur.points.col(j) - cur.points.col(i)).norm();
        if (d > best) best = d, farthest[static_cast<std::size_t>(i)] = j;
      }
      if (best > 0.0) priority.emplace_back(best, i);
    }
    if (priority.empty()) break;
    std::stable_sort(priority.begin(), priority.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    const auto want = static_cast<std::size_t>(target - cur.size());
    const std::size_t batch = std::min({want, priority.size(), std::max<std::size_t>(1, cur.size() / 4)});
    Points inserted(3, static_cast<Eigen::Index>(batch));
    for (std::size_t k = 0; k < batch; ++k) {
      const Eigen::Index s = priority[k].second;
      const Eigen::Index t = farthest[static_cast<std::size_t>(s)];
      inserted.col(static_cast<Eigen::Index>(k)) = (cur.points.col(t) + 2.0 * cur.points.col(s)) / 3.0;
    }
    const IsoPointSet added = project_to_iso(field, inserted, params);
    if (added.size() == 0) break;
    const Eigen::Index old = cur.size();
    const Eigen::Index grow = std::min<Eigen::Index>(added.size(), target - old);
    cur.points.conservativeResize(3, old + grow);
    cur.normals.conservativeResize(3, old + grow);
    cur.residuals.conservativeResize(old + grow);
    cur.points.rightCols(grow) = added.points.leftCols(grow);
    cur.normals.rightCols(grow) = added.normals.leftCols(grow);
    cur.residuals.tail(grow) = added.residuals.head(grow);
  }
  return cur;
}

IsoPointSet refresh_iso_points(const ImplicitField& field, const Points& seeds, const SamplerParams& params,
                               int target, std::uint64_t seed) {
  params.validate();
  require(seeds.cols() > 0, ErrorCode::EmptyPointCloud, "iso-point refresh needs seed points");
  require(target >= 10, ErrorCode::InvalidArgument, "iso-point target must be at least 10");
  Rng rng(seed);
  const int count = std::max(10, target / 2);
  const int uniform = static_cast<int>(std::lround(params.uniform_box_fraction * count));
  std::normal_distribution<double> gauss(0.0, params.epsilon / 2.0);
  std::uniform_int_distribution<Eigen::Index> pick(0, seeds.cols() - 1);
  Points starts(3, count);
  for (int k = 0; k < count - uniform; ++k) {
    const Vec3 jitter(gauss(rng), gauss(rng), gauss(rng));
    starts.col(k) = seeds.col(pick(rng)) + jitter;
  }
  for (int k = count - uniform; k < count; ++k) starts.col(k) = params.box.sample(rng);

  IsoPointSet iso = project_to_iso(field, starts, params);
  require(iso.size() >= 10, ErrorCode::IsoSurfaceNotFound,
          "iso-surface not found: only " + std::to_string(iso.size()) + " points reached the zero-level set");
  for (int k = 0; k < params.uniform_iters && iso.size() > 0; ++k) iso = resample_uniform(iso, field, params);
  if (params.edge_aware && iso.size() > 0) iso = resample_edge_aware(iso, field, params);
  require(iso.size() >= 10, ErrorCode::IsoSurfaceNotFound, "iso-surface not found after resampling");
  return upsample(iso, field, params, target);
}

Eigen::VectorXd nearest_neighbor_distances(const Points& points) {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(points.cols());
  if (points.cols() < 2) return d;
  const KdTree tree(points);
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    // Grow the search radius until something other than i turns up.
    double r = 1e-6 + tree.nearest(points.col(i)).second;
    double best = std::numeric_limits<double>::infinity();
    for (int attempt = 0; attempt < 64 && !std::isfinite(best); ++attempt, r *= 2.0) {
      for (const Eigen::Index j : tree.radius_search(points.col(i), r))
        if (j != i) best = std::min(best, (points.col(j) - points.col(i)).norm());
    }
    d[i] = best;
  }
  return d;
}

void write_iso_points_ply(const std::filesystem::path& path, const IsoPointSet& iso) {
  write_oriented_points_ply(path, iso.points, iso.normals);
}

}  // namespace sartomo
