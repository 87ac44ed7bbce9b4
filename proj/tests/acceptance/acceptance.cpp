// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// The trained toy model is cached under the build tree, keyed by its recipe.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "rankclust/checkpoint.hpp"
#include "rankclust/cluster.hpp"
#include "rankclust/cluster_plan.hpp"
#include "rankclust/codec.hpp"
#include "rankclust/corpus.hpp"
#include "rankclust/half.hpp"
#include "rankclust/harness.hpp"
#include "rankclust/model.hpp"
#include "rankclust/report.hpp"
#include "rankclust/train.hpp"
#include "rankclust/transforms.hpp"

using namespace rankclust;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr std::size_t kEvalTokens = 8192;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, double seconds, const Outcome& o) {
  fmt::print("[{}] {:2d} {:<26} {} ({:.1f}s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail, seconds);
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

// Runs one criterion; exceptions count as failures.
void criterion(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, fmt::format("threw: {}", e.what())};
  }
  const double s = std::chrono::duration<double>(Clock::now() - t0).count();
  if (limit_s > 0 && s > limit_s) {
    o.pass = false;
    o.detail += fmt::format("; over the {:.0f}s limit", limit_s);
  }
  report(id, name, s, o);
}

std::uint64_t fnv(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Distinct ascending binary16-exact centroids.
std::vector<float> half_centroids(std::size_t k, std::mt19937_64& rng) {
  std::normal_distribution<float> d(0.0f, 0.05f);
  std::vector<float> c;
  while (c.size() < k) {
    c.push_back(round_to_half(d(rng)));
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
  }
  return c;
}

ClusteredMatrix random_instance(std::size_t k, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dim(1, 256);
  const std::size_t rows = dim(rng), cols = dim(rng);
  std::uniform_int_distribution<Label> lab(0, static_cast<Label>(k - 1));
  std::vector<Label> labels(rows * cols);
  for (auto& l : labels) l = lab(rng);
  return ClusteredMatrix(rows, cols, half_centroids(k, rng), std::move(labels));
}

std::vector<double> ratios(const std::vector<PerturbationRecord>& recs, const std::string& sel,
                           const std::vector<std::string>& transforms) {
  std::vector<double> out;
  for (const auto& r : recs) {
    if (r.selector != sel || r.failed()) continue;
    if (std::find(transforms.begin(), transforms.end(), r.transform) != transforms.end()) out.push_back(r.ppl_ratio);
  }
  return out;
}

// CSV text with the trailing timing column removed from every line.
std::string without_ms(const std::string& csv) {
  std::string out;
  std::size_t start = 0;
  while (start < csv.size()) {
    const auto end = csv.find('\n', start);
    const std::string line = csv.substr(start, end - start);
    out += line.substr(0, line.rfind(',')) + "\n";
    start = end == std::string::npos ? csv.size() : end + 1;
  }
  return out;
}

struct Trained {
  ToyModel model;
  double init_ppl = 0.0;
  double ppl = 0.0;
  bool cached = false;
};

Trained trained_model(const CorpusSplit& corpus) {
  const ModelConfig config;
  const TrainOptions options;
  const auto eval = eval_slice(corpus, kEvalTokens);
  const std::string recipe =
      fmt::format("{}|{}|{}|{}|{}|{}|{}", config.to_json(), options.steps, options.lr, options.batch, options.warmup,
                  options.seed, corpus.train.size());
  const fs::path path = fs::path(RANKCLUST_CACHE_DIR) / fmt::format("toy-{:016x}.wcx", fnv(recipe));
  Trained t{ToyModel::init(config)};
  t.init_ppl = perplexity(t.model, eval);
  if (fs::exists(path)) {
    t.model = load_checkpoint(path).model;
    t.cached = true;
  } else {
    fmt::print("training the toy model ({} steps); cached at {}\n", options.steps, path.string());
    std::fflush(stdout);
    const auto r = train(t.model, corpus.train, options);
    save_checkpoint(path, r.model);
    t.model = load_checkpoint(path).model;
  }
  t.ppl = perplexity(t.model, eval);
  return t;
}

}  // namespace

int main() {
  const auto t_start = Clock::now();
  const CorpusSplit corpus = load_corpus(RANKCLUST_CORPUS);
  const auto eval = eval_slice(corpus, kEvalTokens);

  // --- exact property suites (no model) -------------------------------------

  criterion(1, "codec round trip", 10.0, [] {
    std::mt19937_64 rng(1001);
    const std::size_t ks[] = {2, 16, 32, 64};
    int bad_bytes = 0, bad_recon = 0;
    for (int i = 0; i < 200; ++i) {
      const auto cm = random_instance(ks[i % 4], rng);
      const std::vector<NamedClustered> one{{fmt::format("t{}", i), cm}};
      const auto bytes = pack(one);
      const auto back = unpack(bytes);
      if (back.size() != 1 || !(back[0].matrix == cm) || pack(back) != bytes) ++bad_bytes;
      const auto w = reconstruct(back[0].matrix);
      for (std::size_t d = 0; d < cm.rows(); ++d) {
        for (std::size_t o = 0; o < cm.cols(); ++o) {
          if (w(d, o) != cm.centroids()[cm.label(d, o)]) {
            ++bad_recon;
            d = cm.rows();
            break;
          }
        }
      }
    }
    return Outcome{bad_bytes == 0 && bad_recon == 0,
                   fmt::format("200 instances, byte mismatches {}, reconstruction mismatches {}", bad_bytes, bad_recon)};
  });

  criterion(2, "LUT matches dense", 5.0, [] {
    std::mt19937_64 rng(1002);
    const std::size_t ks[] = {2, 16, 32, 64};
    std::normal_distribution<float> nx;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const auto cm = random_instance(ks[i % 4], rng);
      std::vector<float> x(cm.rows());
      for (auto& v : x) v = nx(rng);
      const auto dense = matvec(reconstruct(cm), x);
      const auto lut = lut_matvec(cm, x);
      double num = 0, den = 0;
      for (std::size_t o = 0; o < dense.size(); ++o) {
        num += (static_cast<double>(lut[o]) - dense[o]) * (static_cast<double>(lut[o]) - dense[o]);
        den += static_cast<double>(dense[o]) * dense[o];
      }
      worst = std::max(worst, den > 0 ? std::sqrt(num / den) : std::sqrt(num));
    }
    return Outcome{worst <= 1e-5, fmt::format("worst relative L2 error {:.3g} over 100 instances (limit 1e-5)", worst)};
  });

  criterion(3, "k-means optimality gap", 10.0, [] {
    std::mt19937_64 rng(1003);
    std::uniform_int_distribution<std::size_t> us(2, 12), ks(1, 3);
    std::uniform_real_distribution<float> val(-1.0f, 1.0f);
    std::uniform_int_distribution<std::uint64_t> wt(1, 50);
    double worst = 0.0;
    int non_contiguous = 0;
    for (int i = 0; i < 50; ++i) {
      std::vector<float> distinct;
      const std::size_t u = us(rng);
      while (distinct.size() < u) {
        const float v = val(rng);
        if (std::find(distinct.begin(), distinct.end(), v) == distinct.end()) distinct.push_back(v);
      }
      std::vector<float> values;
      for (float v : distinct) {
        for (std::uint64_t r = wt(rng); r > 0; --r) values.push_back(v);
      }
      const auto h = histogram(values);
      const std::size_t k = std::min(ks(rng), h.distinct());
      double best = std::numeric_limits<double>::infinity();
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        KMeansOptions o;
        o.seed = seed;
        best = std::min(best, kmeans_1d(h, k, o).cost);
      }
      const auto dp = exact_kmeans_dp(h, k);
      const auto& lab = dp.value_labels;
      bool contiguous = lab.front() == 0 && lab.back() == k - 1;
      for (std::size_t j = 1; j < lab.size(); ++j) contiguous &= lab[j] == lab[j - 1] || lab[j] == lab[j - 1] + 1;
      non_contiguous += !contiguous;
      const double gap = dp.cost > 0 ? best / dp.cost : (best > 1e-12 ? std::numeric_limits<double>::infinity() : 1.0);
      worst = std::max(worst, gap);
    }
    return Outcome{worst <= 1.05 && non_contiguous == 0,
                   fmt::format("worst best-of-5 / DP cost {:.4f} (limit 1.05), non-contiguous DP partitions {}", worst,
                               non_contiguous)};
  });

  criterion(4, "moment matching", 0.0, [] {
    std::mt19937_64 rng(1004);
    std::uniform_real_distribution<double> c(-2, 2), mu(-1, 1), var(1e-4, 4);
    std::uniform_int_distribution<std::uint64_t> cnt(1, 10000);
    std::uniform_int_distribution<std::size_t> ks(2, 64);
    double worst_mu = 0, worst_var = 0, worst_rank = 0;
    for (int i = 0; i < 100; ++i) {
      const std::size_t k = ks(rng);
      std::vector<double> cs(k);
      std::vector<std::uint64_t> ns(k);
      for (auto& x : cs) x = c(rng);
      for (auto& x : ns) x = cnt(rng);
      const Moments target{mu(rng), var(rng)};
      const auto out = moment_match(cs, ns, target);
      double w = 0, m = 0, v = 0;
      for (std::size_t j = 0; j < k; ++j) {
        w += static_cast<double>(ns[j]);
        m += static_cast<double>(ns[j]) * out[j];
      }
      m /= w;
      for (std::size_t j = 0; j < k; ++j) v += static_cast<double>(ns[j]) * (out[j] - m) * (out[j] - m);
      v /= w;
      worst_mu = std::max(worst_mu, std::abs(m - target.mean) / std::max(std::abs(target.mean), 1e-300));
      worst_var = std::max(worst_var, std::abs(v - target.variance) / target.variance);
      const std::vector<float> before(cs.begin(), cs.end()), after(out.begin(), out.end());
      worst_rank = std::max(worst_rank, rank_distance(before, after));
    }
    return Outcome{worst_mu <= 1e-6 && worst_var <= 1e-6 && worst_rank == 0.0,
                   fmt::format("worst relative error mu {:.2g}, sigma2 {:.2g}; worst rank distance {}", worst_mu,
                               worst_var, worst_rank)};
  });

  // --- toy-model reproductions ------------------------------------------------

  const auto t_train = Clock::now();
  const Trained tm = trained_model(corpus);
  const ToyModel& model = tm.model;
  const double train_s = std::chrono::duration<double>(Clock::now() - t_train).count();
  const bool gate = tm.ppl <= 0.5 * tm.init_ppl;
  fmt::print("[{}]    training gate              init ppl {:.3f}, trained ppl {:.3f}, ratio {:.4f} (limit 0.5), "
             "model {}{} ({:.1f}s)\n",
             gate ? "PASS" : "FAIL", tm.init_ppl, tm.ppl, tm.ppl / tm.init_ppl, model_id(model),
             tm.cached ? ", cached" : "", train_s);
  if (!gate) ++failures;
  {
    // The checked-in baseline pins the expected model for this recipe.
    std::FILE* f = std::fopen(RANKCLUST_BASELINE, "rb");
    if (f != nullptr) {
      std::fclose(f);
      const auto base = nlohmann::json::parse(read_text(RANKCLUST_BASELINE));
      const bool same = base.value("model_id", std::string()) == model_id(model);
      fmt::print("[info]    baseline model id {} ({})\n", base.value("model_id", std::string("?")),
                 same ? "matches" : "differs; numerics changed since the baseline was recorded");
    }
  }

  const std::uint64_t hash0 = model.parameter_hash();
  std::vector<std::string> isolation_breaks;
  auto check_hash = [&](const char* suite) {
    if (model.parameter_hash() != hash0) isolation_breaks.emplace_back(suite);
  };
  const LayerSelector mid = default_selector(model.config());
  const double base_ppl = perplexity(model, eval);

  criterion(5, "affine gauge", 60.0, [&] {
    const auto& w = model.projection(mid);
    std::vector<float> aw(w.values().begin(), w.values().end());
    for (auto& v : aw) v = 0.5f * v + 0.01f;
    const auto changed = model.set_projection(mid, DenseMatrix(w.rows(), w.cols(), aw, w.role()));
    const std::vector<Token> probe(eval.begin(), eval.begin() + static_cast<std::ptrdiff_t>(model.config().context));
    const auto p0 = probe_post_norm(model, mid.block, probe);
    const auto p1 = probe_post_norm(changed, mid.block, probe);
    double min_cos = 1.0;
    for (std::size_t i = 0; i < p0.rows(); ++i) min_cos = std::min(min_cos, cosine_similarity(p0.row(i), p1.row(i)));
    const double ratio = perplexity(changed, eval) / base_ppl;
    // Paired contrast: a centroid permutation on the same projection.
    const auto cm = cluster_matrix(w, 32);
    int lower = 0;
    double perm_cos_median = 0.0;
    std::vector<double> perm_cos;
    for (std::uint64_t s = 0; s < 10; ++s) {
      const auto pm = model.set_projection(
          mid, reconstruct(apply(cm, CentroidTransform::seeded(TransformKind::random_permutation, s))).with_role(w.role()));
      const auto pp = probe_post_norm(pm, mid.block, probe);
      double mc = 1.0;
      for (std::size_t i = 0; i < pp.rows(); ++i) mc = std::min(mc, cosine_similarity(p0.row(i), pp.row(i)));
      perm_cos.push_back(mc);
      lower += mc < min_cos;
    }
    perm_cos_median = median(perm_cos);
    check_hash("affine");
    return Outcome{min_cos > 0.99 && ratio <= 1.05,
                   fmt::format("{} min probe cosine {:.5f} (limit > 0.99), ppl ratio {:.4f} (limit 1.05); "
                               "permutation min cosine median {:.4f}, lower on {}/10 seeds",
                               mid.to_string(), min_cos, ratio, perm_cos_median, lower)};
  });

  std::string determinism_csv;
  criterion(6, "rank dichotomy", 600.0, [&] {
    SuiteOptions o;
    o.k = 32;
    o.seeds = seed_range(10);
    const std::vector<CentroidTransform> ts{
        CentroidTransform::seeded(TransformKind::random_permutation, 0),
        CentroidTransform::seeded(TransformKind::gaussian_random, 0),
        CentroidTransform::seeded(TransformKind::sorted_gaussian, 0).corrected(),
        CentroidTransform::seeded(TransformKind::sign_scramble_shift, 0)};
    const auto recs = run_single_layer_suite(model, mid, ts, o, eval);
    check_hash("single-layer");
    determinism_csv = records_csv(recs);
    const std::string sel = mid.to_string();
    const double perm = median(ratios(recs, sel, {ts[0].to_text()}));
    const double gauss = median(ratios(recs, sel, {ts[1].to_text()}));
    const double sorted_c = median(ratios(recs, sel, {ts[2].to_text()}));
    const double shift = median(ratios(recs, sel, {ts[3].to_text()}));
    const bool ok = std::min(perm, gauss) > std::max(sorted_c, shift) && sorted_c <= 1.15;
    return Outcome{ok, fmt::format("median ppl ratio: random_permutation {:.4f}, gaussian_random {:.4f} > "
                                   "sorted_gaussian(corrected) {:.4f}, sign_scramble_shift {:.4f}; corrected limit 1.15",
                                   perm, gauss, sorted_c, shift)};
  });

  criterion(7, "depth pattern", 0.0, [&] {
    SuiteOptions o;
    o.k = 32;
    o.seeds = seed_range(10);
    const auto sels = depth_selectors(model.config());
    const auto recs = run_depth_suite(model, sels, o, eval);
    check_hash("depth");
    const auto conds = depth_conditions();
    // conditions: sign_preserving_shuffle, sign_scramble_shift, gaussian_random, sorted_gaussian
    const std::vector<std::string> breaking{conds[0].to_text(), conds[2].to_text()};
    const std::vector<std::string> preserving{conds[1].to_text(), conds[3].to_text()};
    int held = 0;
    std::string cells;
    for (const auto& s : sels) {
      const double b = median(ratios(recs, s.to_string(), breaking));
      const double p = median(ratios(recs, s.to_string(), preserving));
      held += b >= p;
      cells += fmt::format("{}{} {:.4f}/{:.4f}", cells.empty() ? "" : ", ", s.to_string(), b, p);
    }
    return Outcome{held >= 3, fmt::format("ordering holds at {}/4 (need 3); breaking/preserving medians: {}", held, cells)};
  });

  criterion(8, "progressive drift", 0.0, [&] {
    const auto clustered = cluster_all(model, 32, {});
    const auto t = CentroidTransform::seeded(TransformKind::sorted_gaussian, 0);
    std::map<double, std::vector<double>> raw, corr;
    for (std::uint64_t s = 0; s < 5; ++s) {
      for (const auto& p : run_progressive(model, t, 2, s, clustered, eval).points) raw[p.fraction_pct].push_back(p.ppl_ratio);
      for (const auto& p : run_progressive(model, t.corrected(), 2, s, clustered, eval).points) {
        corr[p.fraction_pct].push_back(p.ppl_ratio);
      }
    }
    check_hash("progressive");
    bool pointwise = true;
    std::string curve;
    for (const auto& [f, v] : raw) {
      const double u = median(v), c = median(corr.at(f));
      pointwise &= c <= u;
      curve += fmt::format("{}{:.0f}%: {:.4f}/{:.4f}", curve.empty() ? "" : ", ", f, c, u);
    }
    const double u_end = median(raw.rbegin()->second), c_end = median(corr.rbegin()->second);
    return Outcome{pointwise && u_end > 2.0 * c_end,
                   fmt::format("corrected <= uncorrected at every point: {}; final {:.4f} vs 2 x {:.4f} = {:.4f}; "
                               "corrected/uncorrected medians {}",
                               pointwise ? "yes" : "no", u_end, c_end, 2.0 * c_end, curve)};
  });

  criterion(9, "variance predictor", 0.0, [&] {
    SuiteOptions o;
    o.k = 32;
    const auto recs = run_monotone_sweep(model, mid, monotone_sweep_transforms(), o, eval);
    check_hash("sweep");
    std::vector<double> dv, dp;
    for (const auto& r : recs) {
      dv.push_back(std::abs(std::log(r.sigma2 / recs.front().sigma2)));
      dp.push_back(std::log(r.ppl_ratio));
    }
    const double rho = spearman(dv, dp);
    return Outcome{rho > 0.0, fmt::format("spearman {:.4f} over {} transforms (limit > 0)", rho, recs.size())};
  });

  criterion(10, "adaptive plan", 0.0, [&] {
    const std::vector<std::size_t> cands{16, 32, 64};
    const auto plan = plan_model(model, cands, 0.5, eval);
    check_hash("cluster");
    const double delta = plan.clustered_ppl - plan.baseline_ppl;
    std::string hist;
    for (const auto& [k, n] : plan.k_histogram()) hist += fmt::format("{}K={}: {}", hist.empty() ? "" : ", ", k, n);
    std::size_t forced = 0;
    for (const auto& e : plan.entries) forced += e.choice.forced;
    return Outcome{plan.valid() && delta <= 0.7,
                   fmt::format("plan {}, {} layers ({}), forced {}; full-model ppl {:.4f} -> {:.4f}, delta {:+.4f} "
                               "(limit 0.7)",
                               plan.valid() ? "valid" : "INVALID", plan.entries.size(), hist, forced, plan.baseline_ppl,
                               plan.clustered_ppl, delta)};
  });

  criterion(11, "execution-path bench", 0.0, [&] {
    const auto rows = bench_execution_paths(model, corpus.heldout, BenchOptions{});
    check_hash("bench");
    double rebuild = 0, lut = 0;
    for (const auto& r : rows) {
      if (r.path == "rebuild") rebuild = r.ratio;
      if (r.path == "lut") lut = r.ratio;
    }
    return Outcome{rebuild > 0 && rebuild <= 1.2,
                   fmt::format("rebuild/dense {:.3f} (limit 1.2); lut/dense {:.2f} (reported only)", rebuild, lut)};
  });

  criterion(12, "isolation + determinism", 0.0, [&] {
    SuiteOptions o;
    o.k = 32;
    o.seeds = seed_range(10);
    const std::vector<CentroidTransform> ts{
        CentroidTransform::seeded(TransformKind::random_permutation, 0),
        CentroidTransform::seeded(TransformKind::gaussian_random, 0),
        CentroidTransform::seeded(TransformKind::sorted_gaussian, 0).corrected(),
        CentroidTransform::seeded(TransformKind::sign_scramble_shift, 0)};
    const auto again = records_csv(run_single_layer_suite(model, mid, ts, o, eval));
    check_hash("single-layer rerun");
    const bool same_single = !determinism_csv.empty() && without_ms(again) == without_ms(determinism_csv);
    const auto clustered = cluster_all(model, 32, {});
    const auto t = CentroidTransform::seeded(TransformKind::sorted_gaussian, 0);
    const auto a = records_csv(run_progressive(model, t, 2, 3, clustered, eval).records());
    const auto b = records_csv(run_progressive(model, t, 2, 3, clustered, eval).records());
    check_hash("progressive rerun");
    const bool same_prog = without_ms(a) == without_ms(b);
    std::string breaks;
    for (const auto& s : isolation_breaks) breaks += (breaks.empty() ? "" : ", ") + s;
    return Outcome{isolation_breaks.empty() && same_single && same_prog,
                   fmt::format("parameter hash restored after every suite: {}; single-layer CSV identical: {}; "
                               "progressive CSV identical: {}",
                               isolation_breaks.empty() ? "yes" : "no (" + breaks + ")", same_single ? "yes" : "no",
                               same_prog ? "yes" : "no")};
  });

  const double total = std::chrono::duration<double>(Clock::now() - t_start).count();
  fmt::print("{} failing criteria; total {:.1f}s\n", failures, total);
  return failures == 0 ? 0 : 1;
}
