#include "sartomo/trainer.hpp"

#include "sartomo/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>

namespace sartomo {

void LossWeights::validate() const {
  for (double w : {iso_sdf, iso_normal, eikonal, on_sdf, normal, off_sdf})
    require(std::isfinite(w) && w >= 0.0, ErrorCode::Config, "loss weights must be finite and non-negative");
  require(std::isfinite(alpha_off) && alpha_off > 0.0, ErrorCode::Config, "loss: alpha_off must be positive");
  require(iso_sdf + iso_normal + eikonal + on_sdf + normal + off_sdf > 0.0, ErrorCode::Config,
          "loss: at least one weight must be positive");
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"iso_sdf", w.iso_sdf}, {"iso_normal", w.iso_normal}, {"eikonal", w.eikonal},
       {"on_sdf", w.on_sdf},   {"normal", w.normal},         {"off_sdf", w.off_sdf},
       {"alpha_off", w.alpha_off}, {"oriented_normals", w.oriented_normals}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  require(j.is_object(), ErrorCode::Config, "loss weights must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "iso_sdf") w.iso_sdf = value.get<double>();
    else if (key == "iso_normal") w.iso_normal = value.get<double>();
    else if (key == "eikonal") w.eikonal = value.get<double>();
    else if (key == "on_sdf") w.on_sdf = value.get<double>();
    else if (key == "normal") w.normal = value.get<double>();
    else if (key == "off_sdf") w.off_sdf = value.get<double>();
    else if (key == "alpha_off") w.alpha_off = value.get<double>();
    else if (key == "oriented_normals") w.oriented_normals = value.get<bool>();
    else throw Error(ErrorCode::Config, "loss: unknown key '" + key + "'");
  }
  w.validate();
}

void TrainConfig::validate() const {
  require(steps >= 1, ErrorCode::Config, "train: steps must be >= 1");
  require(batch_size >= 1, ErrorCode::Config, "train: batch_size must be >= 1");
  require(std::isfinite(learning_rate) && learning_rate > 0.0, ErrorCode::Config,
          "train: learning_rate must be positive");
  require(iso_refresh_every >= 1, ErrorCode::Config, "train: iso_refresh_every must be >= 1");
  require(iso_points >= 10, ErrorCode::Config, "train: iso_points must be >= 10");
  require(box_padding >= 0.0, ErrorCode::Config, "train: box_padding must be >= 0");
  require(log_every >= 1, ErrorCode::Config, "train: log_every must be >= 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"steps", c.steps},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"iso_refresh_every", c.iso_refresh_every},
       {"iso_points", c.iso_points},
       {"iso_enabled", c.iso_enabled},
       {"box_padding", c.box_padding},
       {"log_every", c.log_every},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  require(j.is_object(), ErrorCode::Config, "train config must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "steps") c.steps = value.get<int>();
    else if (key == "batch_size") c.batch_size = value.get<int>();
    else if (key == "learning_rate") c.learning_rate = value.get<double>();
    else if (key == "iso_refresh_every") c.iso_refresh_every = value.get<int>();
    else if (key == "iso_points") c.iso_points = value.get<int>();
    else if (key == "iso_enabled") c.iso_enabled = value.get<bool>();
    else if (key == "box_padding") c.box_padding = value.get<double>();
    else if (key == "log_every") c.log_every = value.get<int>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else throw Error(ErrorCode::Config, "train: unknown key '" + key + "'");
  }
  c.validate();
}

void LossTerms::check_finite() const {
  const std::pair<const char*, double> named[] = {{"iso_sdf", iso_sdf}, {"iso_normal", iso_normal},
                                                  {"eikonal", eikonal}, {"on_sdf", on_sdf},
                                                  {"normal", normal},   {"off_sdf", off_sdf},
                                                  {"total", total}};
  for (const auto& [name, v] : named)
    require(std::isfinite(v), ErrorCode::NonFinite, std::string("loss term '") + name + "' is not finite");
}

namespace {

constexpr Eigen::Index kShard = 256;

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Column layout of the concatenated batch: [P | Q_iso | Q_b].
struct Layout {
  Eigen::Index surface = 0, iso = 0, background = 0;
  Eigen::Index total() const { return surface + iso + background; }
};

struct TermSums {
  double on = 0, normal = 0, iso = 0, iso_normal = 0, eik = 0, off = 0;
  void add(const TermSums& o) {
    on += o.on;
    normal += o.normal;
    iso += o.iso;
    iso_normal += o.iso_normal;
    eik += o.eik;
    off += o.off;
  }
};

struct Concatenated {
  Layout layout;
  Points points;
  Points normals;  // zero for Q_b
};

Concatenated concatenate(const TrainingBatch& b) {
  require(b.surface.cols() == b.surface_normals.cols() && b.iso.cols() == b.iso_normals.cols(),
          ErrorCode::ShapeMismatch, "training batch: points and normals differ in count");
  Concatenated c;
  c.layout = {b.surface.cols(), b.iso.cols(), b.background.cols()};
  const Eigen::Index n = c.layout.total();
  require(n > 0, ErrorCode::EmptyPointCloud, "training batch is empty");
  c.points.resize(3, n);
  c.normals = Points::Zero(3, n);
  c.points.leftCols(c.layout.surface) = b.surface;
  c.points.middleCols(c.layout.surface, c.layout.iso) = b.iso;
  c.points.rightCols(c.layout.background) = b.background;
  c.normals.leftCols(c.layout.surface) = b.surface_normals;
  c.normals.middleCols(c.layout.surface, c.layout.iso) = b.iso_normals;
  return c;
}

// 1 - |SC(J, n)| (1 - SC(J, n) when `oriented`) and, optionally, its gradient
// with respect to J.
double normal_term(const Vec3& J, const Vec3& n, bool oriented, Vec3* grad) {
  const double jn = J.norm(), nn = n.norm();
  if (jn == 0.0 || nn == 0.0) {
    if (grad) grad->setZero();
    return 1.0;
  }
  const double c = J.dot(n) / (jn * nn);
  const double s = oriented ? 1.0 : sign(c);
  if (grad) *grad = -s * (n / (jn * nn) - c * J / (jn * jn));
  return 1.0 - s * c;
}

// Per-sample contributions for columns [begin, begin + f.size()) of the
// layout. Sums are unnormalized; gradients already carry weight / |set|.
void contributions(const Layout& L, const LossWeights& w, Eigen::Index begin, const Eigen::VectorXd& f,
                   const Points& J, const Points& normals, TermSums& sums, Eigen::VectorXd* gf, Points* gJ) {
  const double nP = static_cast<double>(L.surface), nI = static_cast<double>(L.iso),
               nB = static_cast<double>(L.background), nE = nI + nB;
  if (gf) {
    gf->setZero(f.size());
    gJ->setZero(3, f.size());
  }
  for (Eigen::Index k = 0; k < f.size(); ++k) {
    const Eigen::Index i = begin + k;
    const double fk = f[k];
    const Vec3 Jk = J.col(k);
    Vec3 g = Vec3::Zero();
    if (i < L.surface) {
      sums.on += std::abs(fk);
      sums.normal += normal_term(Jk, normals.col(k), w.oriented_normals, gf ? &g : nullptr);
      if (gf) {
        (*gf)[k] = w.on_sdf * sign(fk) / nP;
        gJ->col(k) = w.normal * g / nP;
      }
      continue;
    }
    const bool iso = i < L.surface + L.iso;
    if (iso) {
      sums.iso += std::abs(fk);
      sums.iso_normal += normal_term(Jk, normals.col(k), false, gf ? &g : nullptr);
      if (gf) {
        (*gf)[k] = w.iso_sdf * sign(fk) / nI;
        gJ->col(k) = w.iso_normal * g / nI;
      }
    } else {
      const double e = std::exp(-w.alpha_off * std::abs(fk));
      sums.off += e;
      if (gf) (*gf)[k] = -w.off_sdf * w.alpha_off * sign(fk) * e / nB;
    }
    const double jn = Jk.norm();
    sums.eik += std::abs(1.0 - jn);
    if (gf && jn > 0.0) gJ->col(k) += -w.eikonal * sign(1.0 - jn) * Jk / (jn * nE);
  }
}

LossTerms finish(const Layout& L, const LossWeights& w, const TermSums& s) {
  auto mean = [](double sum, Eigen::Index n) { return n > 0 ? sum / static_cast<double>(n) : 0.0; };
  LossTerms t;
  t.on_sdf = mean(s.on, L.surface);
  t.normal = mean(s.normal, L.surface);
  t.iso_sdf = mean(s.iso, L.iso);
  t.iso_normal = mean(s.iso_normal, L.iso);
  t.off_sdf = mean(s.off, L.background);
  t.eikonal = mean(s.eik, L.iso + L.background);
  t.total = w.iso_sdf * t.iso_sdf + w.iso_normal * t.iso_normal + w.eikonal * t.eikonal + w.on_sdf * t.on_sdf +
            w.normal * t.normal + w.off_sdf * t.off_sdf;
  return t;
}

// k distinct indices of [0, n) (all of them, in order, when k >= n).
std::vector<Eigen::Index> choose(Eigen::Index n, Eigen::Index k, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (k >= n) return idx;
  for (Eigen::Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<Eigen::Index> u(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(u(rng))]);
  }
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

Points gather(const Points& src, const std::vector<Eigen::Index>& idx) {
  Points out(3, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = src.col(idx[i]);
  return out;
}

}  // namespace

LossTerms loss_terms(const SdfNetwork<double>& net, const TrainingBatch& batch, const LossWeights& weights) {
  return loss_terms(NetworkField(net), batch, weights);
}

LossTerms loss_terms(const ImplicitField& field, const TrainingBatch& batch, const LossWeights& weights) {
  const Concatenated c = concatenate(batch);
  Eigen::VectorXd f;
  Points J;
  field.evaluate(c.points, f, J);
  TermSums sums;
  contributions(c.layout, weights, 0, f, J, c.normals, sums, nullptr, nullptr);
  return finish(c.layout, weights, sums);
}

LossTerms loss_and_gradient(const SdfNetwork<double>& net, const TrainingBatch& batch, const LossWeights& weights,
                            NetworkParams<double>& gradient) {
  const Concatenated c = concatenate(batch);
  const Eigen::Index n = c.layout.total();
  const std::size_t shards = static_cast<std::size_t>((n + kShard - 1) / kShard);
  std::vector<NetworkParams<double>> grads(shards);
  std::vector<TermSums> sums(shards);
  parallel_for(shards, [&](std::size_t s0, std::size_t s1) {
    for (std::size_t s = s0; s < s1; ++s) {
      const Eigen::Index begin = static_cast<Eigen::Index>(s) * kShard;
      const Eigen::Index len = std::min(kShard, n - begin);
      const auto cache = net.forward_with_cache(c.points.middleCols(begin, len));
      Eigen::VectorXd gf;
      Points gJ;
      contributions(c.layout, weights, begin, cache.values, cache.jacobians, c.normals.middleCols(begin, len),
                    sums[s], &gf, &gJ);
      grads[s] = net.zero_gradients();
      net.backward(cache, gf, gJ, grads[s]);
    }
  });
  gradient = net.zero_gradients();
  TermSums total;
  for (std::size_t s = 0; s < shards; ++s) {
    total.add(sums[s]);
    gradient += grads[s];
  }
  return finish(c.layout, weights, total);
}

Adam::Adam(const NetworkParams<double>& shape, double beta1, double beta2, double eps)
    : m_(shape), v_(shape), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.set_zero();
  v_.set_zero();
}

void Adam::step(NetworkParams<double>& params, const NetworkParams<double>& grad, double lr) {
  require(grad.layers.size() == params.layers.size() && m_.layers.size() == params.layers.size(),
          ErrorCode::ShapeMismatch, "adam: parameter shapes differ");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_), c2 = 1.0 - std::pow(beta2_, t_);
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.square();
    p -= lr * (m / c1) / ((v / c2).sqrt() + eps_);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& P = params.layers[l];
    const auto& G = grad.layers[l];
    auto pw = P.weight.array();
    auto mw = m_.layers[l].weight.array();
    auto vw = v_.layers[l].weight.array();
    update(pw, G.weight.array(), mw, vw);
    auto pb = P.bias.array();
    auto mb = m_.layers[l].bias.array();
    auto vb = v_.layers[l].bias.array();
    update(pb, G.bias.array(), mb, vb);
  }
}

double scheduled_learning_rate(double base, int step, int total) {
  const int period = std::max(1, (total + 2) / 3);
  return base * std::pow(0.5, step / period);
}

Points iso_point_normals(const IsoPointSet& iso, double radius) {
  Points normals = iso.normals;
  if (iso.size() == 0) return normals;
  const KdTree tree(iso.points);
  parallel_for(static_cast<std::size_t>(iso.size()), [&](std::size_t b, std::size_t e) {
    for (std::size_t s = b; s < e; ++s) {
      const auto i = static_cast<Eigen::Index>(s);
      auto nb = tree.radius_search(iso.points.col(i), radius);
      nb.erase(std::remove(nb.begin(), nb.end(), i), nb.end());
      if (const auto n = pca_normal(iso.points, i, nb)) normals.col(i) = n->dot(iso.normals.col(i)) < 0 ? -*n : *n;
    }
  });
  return normals;
}

Aabb training_region(const OrientedPointCloud& cloud, double padding) {
  Aabb box = cloud.bounds().inflated(padding);
  // A flat cloud still needs a box with volume.
  const double floor = std::max(1e-3, 0.05 * box.extent().maxCoeff());
  for (int k = 0; k < 3; ++k) {
    if (box.hi[k] - box.lo[k] < floor) {
      const double mid = 0.5 * (box.hi[k] + box.lo[k]);
      box.lo[k] = mid - 0.5 * floor;
      box.hi[k] = mid + 0.5 * floor;
    }
  }
  return box;
}

TrainResult train(SdfNetwork<double> net, const OrientedPointCloud& cloud, const TrainConfig& config,
                  const LossWeights& weights, const std::filesystem::path& failure_checkpoint,
                  const std::function<void(const HistoryRow&)>& progress) {
  config.validate();
  weights.validate();
  cloud.validate();
  require(cloud.size() > 0, ErrorCode::EmptyPointCloud, "train: the point cloud is empty");

  const Aabb region = training_region(cloud, config.box_padding);
  const SamplerParams sampler = SamplerParams::defaults(region, config.iso_points);
  Adam adam(net.params());
  IsoPointSet iso;
  Points iso_normals(3, 0);

  TrainResult result;
  result.best = net.params();
  result.best_loss = std::numeric_limits<double>::infinity();
  NetworkParams<double> gradient;

  auto diverged = [&](int step, const std::string& what) {
    if (!failure_checkpoint.empty()) net.save(failure_checkpoint);
    throw Error(ErrorCode::Diverged, "training diverged at step " + std::to_string(step) + ": " + what);
  };

  for (int step = 0; step < config.steps; ++step) {
    if (config.iso_enabled && step > 0 && step % config.iso_refresh_every == 0) {
      try {
        iso = refresh_iso_points(NetworkField(net), cloud.points, sampler, config.iso_points,
                                 derive_seed(config.seed, 2, static_cast<std::uint64_t>(step)));
        iso_normals = iso_point_normals(iso, sampler.epsilon);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::IsoSurfaceNotFound) throw;
        iso = {};
        iso_normals.resize(3, 0);
        ++result.iso_failures;
      }
      ++result.iso_refreshes;
    }

    Rng rng(derive_seed(config.seed, 1, static_cast<std::uint64_t>(step)));
    TrainingBatch batch;
    const auto pi = choose(cloud.size(), config.batch_size, rng);
    batch.surface = gather(cloud.points, pi);
    batch.surface_normals = gather(cloud.normals, pi);
    const auto qi = choose(iso.size(), config.batch_size, rng);
    batch.iso = gather(iso.points, qi);
    batch.iso_normals = gather(iso_normals, qi);
    batch.background.resize(3, config.batch_size);
    for (int k = 0; k < config.batch_size; ++k) batch.background.col(k) = region.sample(rng);

    const LossTerms terms = loss_and_gradient(net, batch, weights, gradient);
    try {
      terms.check_finite();
    } catch (const Error& e) {
      diverged(step, e.what());
    }
    if (!gradient.all_finite()) diverged(step, "non-finite gradient");

    if (terms.total < result.best_loss) {
      result.best_loss = terms.total;
      result.best = net.params();
      result.best_step = step;
    }
    const double lr = scheduled_learning_rate(config.learning_rate, step, config.steps);
    const HistoryRow row{step, terms, lr, static_cast<int>(iso.size())};
    if (step % config.log_every == 0 || step + 1 == config.steps) {
      result.history.push_back(row);
      if (progress) progress(row);
    }

    NetworkParams<double> previous = net.params();
    adam.step(net.params(), gradient, lr);
    if (!net.params().all_finite()) {
      net.params() = std::move(previous);
      diverged(step, "non-finite parameters after the update");
    }
  }
  result.net = std::move(net);
  return result;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& history) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot write " + path.string());
  out << "step,iso_sdf,iso_normal,eikonal,on_sdf,normal,off_sdf,total,lr,iso_points\n";
  out.precision(10);
  for (const auto& r : history) {
    const auto& t = r.terms;
    out << r.step << ',' << t.iso_sdf << ',' << t.iso_normal << ',' << t.eikonal << ',' << t.on_sdf << ','
        << t.normal << ',' << t.off_sdf << ',' << t.total << ',' << r.lr << ',' << r.iso_points << '\n';
  }
  require(out.good(), ErrorCode::Io, "failed writing " + path.string());
}

void to_json(nlohmann::json& j, const ValidationReport& r) {
  j = {{"chamfer", r.chamfer},
       {"on_surface_rms", r.on_surface_rms},
       {"on_surface_rms_all", r.on_surface_rms_all},
       {"eikonal_mean", r.eikonal_mean},
       {"normal_rms_deg", r.normal_rms_deg},
       {"iso_points", r.iso_points},
       {"samples", r.samples},
       {"observable_samples", r.observable_samples}};
}

IsoPointSet extract_iso_points(const ImplicitField& field, const Aabb& box, int target, std::uint64_t seed) {
  require(target >= 10, ErrorCode::InvalidArgument, "extract_iso_points: target must be >= 10");
  SamplerParams params = SamplerParams::defaults(box, target);
  Rng rng(derive_seed(seed, 3));
  Points seeds(3, 2 * target);
  for (int i = 0; i < seeds.cols(); ++i) seeds.col(i) = box.sample(rng);
  return refresh_iso_points(field, seeds, params, target, derive_seed(seed, 4));
}

ValidationReport validate_field(const ImplicitField& field, const Surface& truth, const Aabb& box, int samples,
                                std::uint64_t seed, const ObservableFn& observable, IsoPointSet* iso_out) {
  require(samples >= 10, ErrorCode::InvalidArgument, "validate: samples must be >= 10");
  ValidationReport report;
  report.samples = samples;

  Rng rng(derive_seed(seed, 5));
  Points g(3, samples), gn(3, samples), u(3, samples);
  for (int i = 0; i < samples; ++i) {
    const auto [p, n] = truth.sample(rng);
    g.col(i) = p;
    gn.col(i) = n;
  }
  for (int i = 0; i < samples; ++i) u.col(i) = box.sample(rng);
  std::vector<char> seen(static_cast<std::size_t>(samples), 1);
  if (observable)
    for (int i = 0; i < samples; ++i) seen[static_cast<std::size_t>(i)] = observable(gn.col(i));
  report.observable_samples = static_cast<int>(std::count(seen.begin(), seen.end(), 1));
  require(report.observable_samples > 0, ErrorCode::InvalidArgument, "validate: no observable ground-truth samples");
  const double n_seen = report.observable_samples;

  // A poor field may not support a full refresh; plain projections of the
  // uniform samples are the fallback, and the box diagonal caps distances
  // when the zero set is missing altogether.
  const SamplerParams params = SamplerParams::defaults(box, samples);
  IsoPointSet iso;
  try {
    iso = extract_iso_points(field, box, samples, seed);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::IsoSurfaceNotFound) throw;
    iso = project_to_iso(field, u, params);
  }
  report.iso_points = static_cast<int>(iso.size());
  const double cap = box.diagonal();
  double to_truth = cap;
  if (iso.size() > 0) {
    to_truth = 0.0;
    for (Eigen::Index i = 0; i < iso.size(); ++i) to_truth += std::abs(truth.signed_distance(iso.points.col(i)));
    to_truth /= static_cast<double>(iso.size());
  }

  // Both the Newton foot point and the nearest iso-point lie on the zero set,
  // so the smaller distance is the tighter bound.
  const ProjectionResult proj = project_newton(field, g, params);
  const std::optional<KdTree> tree = iso.size() > 0 ? std::optional<KdTree>(KdTree(iso.points)) : std::nullopt;
  double to_field = 0.0;
  for (int i = 0; i < samples; ++i) {
    if (!seen[static_cast<std::size_t>(i)]) continue;
    double d = tree ? tree->nearest(g.col(i)).second : cap;
    if (proj.status[static_cast<std::size_t>(i)] == ProjectionStatus::Converged)
      d = std::min(d, (proj.points.col(i) - g.col(i)).norm());
    to_field += std::min(d, cap);
  }
  to_field /= n_seen;
  report.chamfer = 0.5 * (to_truth + to_field);

  Eigen::VectorXd f;
  Points J;
  field.evaluate(g, f, J);
  report.on_surface_rms_all = std::sqrt(f.squaredNorm() / samples);
  double f2 = 0.0, angle2 = 0.0;
  for (int i = 0; i < samples; ++i) {
    if (!seen[static_cast<std::size_t>(i)]) continue;
    f2 += f[i] * f[i];
    const double jn = J.col(i).norm();
    const double c = jn > 0.0 ? std::min(1.0, std::abs(J.col(i).dot(gn.col(i))) / jn) : 0.0;
    const double deg = std::acos(c) * 180.0 / kPi;
    angle2 += deg * deg;
  }
  report.on_surface_rms = std::sqrt(f2 / n_seen);
  report.normal_rms_deg = std::sqrt(angle2 / n_seen);

  field.evaluate(u, f, J);
  report.eikonal_mean = (J.colwise().norm().array() - 1.0).abs().mean();
  if (iso_out) *iso_out = std::move(iso);
  return report;
}

}  // namespace sartomo
