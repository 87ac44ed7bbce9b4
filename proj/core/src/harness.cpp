#include "rankclust/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "rankclust/cluster_plan.hpp"
#include "rankclust/codec.hpp"
#include "rankclust/error.hpp"

namespace rankclust {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Seed for one projection of a multi-layer run, so that each projection gets
// its own draw while the whole curve stays a function of one seed.
std::uint64_t projection_seed(std::uint64_t seed, const LayerSelector& sel) {
  return splitmix64(splitmix64(seed) ^ (sel.block * 8 + static_cast<std::uint64_t>(sel.role)));
}

std::vector<float> centroid_copy(const ClusteredMatrix& cm) {
  return {cm.centroids().begin(), cm.centroids().end()};
}

class IsolationGuard {
 public:
  explicit IsolationGuard(const ToyModel& model) : model_(model), hash_(model.parameter_hash()) {}
  void check() const {
    if (model_.parameter_hash() != hash_) throw NumericalError("suite modified its input model");
  }

 private:
  const ToyModel& model_;
  std::uint64_t hash_;
};

PerturbationRecord error_record(const std::string& id, const LayerSelector& sel, const CentroidTransform& t,
                                std::uint64_t seed, double baseline) {
  return {id, sel.to_string(), t.to_text(), "error", seed, baseline, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, 0.0};
}

}  // namespace

std::string model_id(const ToyModel& model) { return fmt::format("{:016x}", model.parameter_hash()); }

std::vector<std::uint64_t> seed_range(std::size_t n) {
  std::vector<std::uint64_t> s(n);
  std::iota(s.begin(), s.end(), std::uint64_t{0});
  return s;
}

LayerSelector default_selector(const ModelConfig& config) { return {config.n_layers / 2, Role::gate}; }

std::vector<PerturbationRecord> run_single_layer_suite(const ToyModel& model, const LayerSelector& sel,
                                                       std::span<const CentroidTransform> transforms,
                                                       const SuiteOptions& options,
                                                       std::span<const Token> eval_tokens) {
  const IsolationGuard guard(model);
  const std::string id = model_id(model);
  const ClusteredMatrix base = cluster_matrix(model.projection(sel), options.k, options.kmeans);
  const ToyModel clustered = model.set_projection(sel, reconstruct(base));
  const double baseline = perplexity(clustered, eval_tokens);
  const auto before = centroid_copy(base);

  std::vector<PerturbationRecord> out;
  for (const auto& t : transforms) {
    std::vector<std::uint64_t> seeds{0};
    if (t.uses_seed()) seeds = options.seeds;
    for (std::uint64_t seed : seeds) {
      const CentroidTransform ts = t.uses_seed() ? t.with_seed(seed) : t;
      const auto t0 = Clock::now();
      try {
        const ClusteredMatrix after = apply(base, ts);
        const double ppl = perplexity(model.set_projection(sel, reconstruct(after)), eval_tokens);
        const WeightStats st = reconstructed_stats(after);
        const auto c_after = centroid_copy(after);
        out.push_back({id, sel.to_string(), t.to_text(), std::string(to_string(t.correction)), seed, baseline, ppl,
                       ppl / baseline, rel_l2_change(base, after), st.mean, st.variance,
                       base.k() >= 2 ? rank_distance(before, c_after) : 0.0, ms_since(t0)});
      } catch (const std::exception&) {
        out.push_back(error_record(id, sel, t, seed, baseline));
        out.back().ms = ms_since(t0);
      }
    }
  }
  guard.check();
  return out;
}

std::vector<CentroidTransform> monotone_sweep_transforms() {
  return {CentroidTransform::identity(),      CentroidTransform::affine(0.5), CentroidTransform::affine(2.0),
          CentroidTransform::tanh_scale(1.0), CentroidTransform::tanh_scale(2.0),
          CentroidTransform::tanh_scale(3.0), CentroidTransform::power(1.5),  CentroidTransform::power(0.5)};
}

std::vector<PerturbationRecord> run_monotone_sweep(const ToyModel& model, const LayerSelector& sel,
                                                   std::span<const CentroidTransform> grid,
                                                   const SuiteOptions& options,
                                                   std::span<const Token> eval_tokens) {
  for (const auto& t : grid) {
    if (!t.rank_preserving()) {
      throw InvalidInput(fmt::format("'{}' is not rank-preserving", t.to_text()));
    }
  }
  return run_single_layer_suite(model, sel, grid, options, eval_tokens);
}

std::vector<LayerSelector> depth_selectors(const ModelConfig& config) {
  const std::size_t mid = config.n_layers / 2;
  return {{0, Role::gate}, {mid, Role::gate}, {config.n_layers - 1, Role::gate}, {mid, Role::q}};
}

std::vector<CentroidTransform> depth_conditions() {
  return {CentroidTransform::seeded(TransformKind::sign_preserving_shuffle, 0),
          CentroidTransform::seeded(TransformKind::sign_scramble_shift, 0),
          CentroidTransform::seeded(TransformKind::gaussian_random, 0),
          CentroidTransform::seeded(TransformKind::sorted_gaussian, 0)};
}

std::vector<PerturbationRecord> run_depth_suite(const ToyModel& model, std::span<const LayerSelector> selectors,
                                                const SuiteOptions& options, std::span<const Token> eval_tokens) {
  std::vector<CentroidTransform> cells{CentroidTransform::identity()};
  for (const auto& c : depth_conditions()) cells.push_back(c);
  std::vector<PerturbationRecord> out;
  for (const auto& sel : selectors) {
    auto rows = run_single_layer_suite(model, sel, cells, options, eval_tokens);
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

std::vector<ClusteredMatrix> cluster_all(const ToyModel& model, std::size_t k, const KMeansOptions& kmeans) {
  std::vector<ClusteredMatrix> out;
  for (const auto& sel : model.projection_selectors()) out.push_back(cluster_matrix(model.projection(sel), k, kmeans));
  return out;
}

ProgressiveCurve run_progressive(const ToyModel& model, const CentroidTransform& transform, std::size_t stride,
                                 std::uint64_t seed, std::span<const ClusteredMatrix> clustered,
                                 std::span<const Token> eval_tokens) {
  if (stride == 0) throw InvalidInput("progressive stride must be positive");
  const auto selectors = model.projection_selectors();
  if (clustered.size() != selectors.size()) throw InvalidInput("need one clustering per projection");
  const IsolationGuard guard(model);

  ToyModel current = model;
  for (std::size_t i = 0; i < selectors.size(); ++i) {
    current = current.set_projection(selectors[i], reconstruct(clustered[i]));
  }
  ProgressiveCurve curve;
  curve.model_id = model_id(model);
  curve.transform = transform;
  curve.seed = seed;
  curve.baseline_ppl = perplexity(current, eval_tokens);
  curve.points.push_back({0, 0.0, curve.baseline_ppl, 1.0, 0.0, kNaN, kNaN, 0.0, 0.0});

  const std::size_t n_blocks = model.config().n_layers;
  const std::size_t per_block = kProjectionRoles.size();
  double diff2 = 0.0, base2 = 0.0, rank_sum = 0.0;
  double w_sum = 0.0, w_sq = 0.0, w_count = 0.0;
  auto t0 = Clock::now();
  for (std::size_t done = 1; done <= n_blocks; ++done) {
    const std::size_t block = n_blocks - done;
    for (std::size_t r = 0; r < per_block; ++r) {
      const std::size_t idx = block * per_block + r;
      const LayerSelector& sel = selectors[idx];
      const ClusteredMatrix& base = clustered[idx];
      const CentroidTransform t = transform.uses_seed() ? transform.with_seed(projection_seed(seed, sel)) : transform;
      const ClusteredMatrix after = apply(base, t);
      current = current.set_projection(sel, reconstruct(after));

      const auto cb = base.centroids();
      const auto ca = after.centroids();
      const auto counts = base.counts();
      for (std::size_t j = 0; j < base.k(); ++j) {
        const double n = static_cast<double>(counts[j]);
        const double d = static_cast<double>(ca[j]) - cb[j];
        diff2 += n * d * d;
        base2 += n * static_cast<double>(cb[j]) * cb[j];
        w_sum += n * ca[j];
        w_sq += n * static_cast<double>(ca[j]) * ca[j];
        w_count += n;
      }
      rank_sum += base.k() >= 2 ? rank_distance(centroid_copy(base), centroid_copy(after)) : 0.0;
    }
    if (done % stride == 0 || done == n_blocks) {
      ProgressivePoint p;
      p.blocks_replaced = done;
      p.fraction_pct = 100.0 * static_cast<double>(done) / static_cast<double>(n_blocks);
      p.ppl = perplexity(current, eval_tokens);
      p.ppl_ratio = p.ppl / curve.baseline_ppl;
      p.rel_l2 = base2 > 0.0 ? std::sqrt(diff2 / base2) : kNaN;
      p.mu = w_sum / w_count;
      p.sigma2 = std::max(0.0, w_sq / w_count - p.mu * p.mu);
      p.rank_distance = rank_sum / static_cast<double>(done * per_block);
      p.ms = ms_since(t0);
      curve.points.push_back(p);
      t0 = Clock::now();
    }
  }
  guard.check();
  return curve;
}

std::vector<PerturbationRecord> ProgressiveCurve::records() const {
  std::vector<PerturbationRecord> out;
  const std::size_t total = points.empty() ? 0 : points.back().blocks_replaced;
  for (const auto& p : points) {
    out.push_back({model_id, fmt::format("blocks:{}/{}", p.blocks_replaced, total), transform.to_text(),
                   std::string(to_string(transform.correction)), seed, baseline_ppl, p.ppl, p.ppl_ratio, p.rel_l2,
                   p.mu, p.sigma2, p.rank_distance, p.ms});
  }
  return out;
}

CoverageReport coverage_report(const ClusteredMatrix& cm, std::string name, double target_share) {
  if (!(target_share > 0.0 && target_share <= 1.0)) throw InvalidInput("coverage share must be in (0, 1]");
  CoverageReport r;
  r.name = std::move(name);
  r.k = cm.k();
  r.target_share = target_share;
  r.counts_desc.assign(cm.counts().begin(), cm.counts().end());
  std::sort(r.counts_desc.begin(), r.counts_desc.end(), std::greater<>());
  const double total = static_cast<double>(std::accumulate(r.counts_desc.begin(), r.counts_desc.end(), std::uint64_t{0}));
  std::uint64_t run = 0;
  for (std::uint64_t c : r.counts_desc) {
    run += c;
    r.cumulative_share.push_back(static_cast<double>(run) / total);
    if (r.clusters_for_target == 0 && r.cumulative_share.back() >= target_share - 1e-12) {
      r.clusters_for_target = r.cumulative_share.size();
    }
  }

  const WeightStats st = reconstructed_stats(cm);
  double m3 = 0.0, m4 = 0.0;
  const auto c = cm.centroids();
  const auto n = cm.counts();
  for (std::size_t j = 0; j < cm.k(); ++j) {
    const double d = static_cast<double>(c[j]) - st.mean;
    m3 += static_cast<double>(n[j]) * d * d * d;
    m4 += static_cast<double>(n[j]) * d * d * d * d;
  }
  m3 /= total;
  m4 /= total;
  if (st.variance > 0.0) {
    r.skewness = m3 / std::pow(st.variance, 1.5);
    r.excess_kurtosis = m4 / (st.variance * st.variance) - 3.0;
  }
  return r;
}

RowMatrix lut_matmul(const ClusteredMatrix& cm, const RowMatrix& x) {
  if (static_cast<std::size_t>(x.cols()) != cm.rows()) throw InvalidInput("lut_matmul: input width mismatch");
  RowMatrix y(x.rows(), static_cast<Eigen::Index>(cm.cols()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto out = lut_matvec(cm, std::span<const float>(x.row(r).data(), cm.rows()));
    std::copy(out.begin(), out.end(), y.row(r).data());
  }
  return y;
}

std::vector<BenchRow> bench_execution_paths(const ToyModel& model, std::span<const Token> prompt_source,
                                            const BenchOptions& o) {
  if (o.reps == 0) throw InvalidInput("bench needs at least one repetition");
  if (o.prompt_tokens == 0 || o.prompt_tokens + o.generated_tokens > model.config().context) {
    throw InvalidInput("prompt plus generated tokens must fit in the context");
  }
  if (prompt_source.size() < o.prompt_tokens) throw InvalidInput("prompt source is too short");

  const auto selectors = model.projection_selectors();
  const auto clustered = cluster_all(model, o.k, o.kmeans);

  auto t_setup = Clock::now();
  ToyModel rebuilt = model;
  for (std::size_t i = 0; i < selectors.size(); ++i) rebuilt = rebuilt.set_projection(selectors[i], reconstruct(clustered[i]));
  const double rebuild_setup = ms_since(t_setup);

  const std::size_t per_block = kProjectionRoles.size();
  const ProjectionFn lut = [&](const LayerSelector& sel, const RowMatrix& x) {
    const std::size_t role_index = static_cast<std::size_t>(
        std::find(kProjectionRoles.begin(), kProjectionRoles.end(), sel.role) - kProjectionRoles.begin());
    return lut_matmul(clustered[sel.block * per_block + role_index], x);
  };

  auto generate = [&](const ToyModel& m, const ProjectionFn* fn) {
    std::vector<Token> seq(prompt_source.begin(), prompt_source.begin() + static_cast<std::ptrdiff_t>(o.prompt_tokens));
    for (std::size_t g = 0; g < o.generated_tokens; ++g) {
      const RowMatrix logits = forward_logits(m, seq, fn);
      Eigen::Index best = 0;
      logits.row(logits.rows() - 1).maxCoeff(&best);
      seq.push_back(static_cast<Token>(best));
    }
    return seq;
  };

  struct Path {
    std::string name;
    const ToyModel* model;
    const ProjectionFn* fn;
    double setup;
    double total = 0.0;
  };
  std::vector<Path> paths{{"dense", &model, nullptr, 0.0}, {"rebuild", &rebuilt, nullptr, rebuild_setup},
                          {"lut", &rebuilt, &lut, 0.0}};
  for (auto& p : paths) generate(*p.model, p.fn);  // warm-up
  for (std::size_t rep = 0; rep < o.reps; ++rep) {
    for (auto& p : paths) {
      const auto t0 = Clock::now();
      generate(*p.model, p.fn);
      p.total += ms_since(t0);
    }
  }
  std::vector<BenchRow> rows;
  const double dense = paths[0].total / static_cast<double>(o.reps);
  for (const auto& p : paths) {
    const double mean = p.total / static_cast<double>(o.reps);
    rows.push_back({p.name, o.reps, mean, mean / dense, p.setup});
  }
  return rows;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidInput("spearman needs two equal-length samples of size >= 2");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw InvalidInput("spearman input is not finite");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(rx.size());
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(ry.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return kNaN;
  return sxy / std::sqrt(sxx * syy);
}

double median(std::vector<double> values) {
  std::erase_if(values, [](double v) { return std::isnan(v); });
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace rankclust
