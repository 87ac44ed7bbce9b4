#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rankclust/cluster.hpp"
#include "rankclust/clustered_matrix.hpp"
#include "rankclust/model.hpp"
#include "rankclust/transforms.hpp"

namespace rankclust {

struct PerturbationRecord {
  std::string model_id;
  std::string selector;
  std::string transform;
  std::string correction;  // "none", "moments", or "error" for a failed cell
  std::uint64_t seed = 0;
  double baseline_ppl = 0.0;
  double ppl = 0.0;
  double ppl_ratio = 0.0;
  double rel_l2 = 0.0;
  double mu = 0.0;
  double sigma2 = 0.0;
  double rank_distance = 0.0;
  double ms = 0.0;

  bool failed() const { return correction == "error"; }
  friend bool operator==(const PerturbationRecord&, const PerturbationRecord&) = default;
};

// 16 hex digits of the parameter hash.
std::string model_id(const ToyModel& model);

struct SuiteOptions {
  std::size_t k = 32;
  KMeansOptions kmeans;
  std::vector<std::uint64_t> seeds;  // seeded transforms run once per seed
};

// Seeds 0..n-1.
std::vector<std::uint64_t> seed_range(std::size_t n);

// Clusters `sel` at K, then for every transform (and seed, for seeded kinds)
// writes the transformed centroids back and evaluates PPL. The baseline is
// the model with that layer clustered and untransformed, so identity gives
// ratio 1. A transform that throws produces an error row.
std::vector<PerturbationRecord> run_single_layer_suite(const ToyModel& model, const LayerSelector& sel,
                                                       std::span<const CentroidTransform> transforms,
                                                       const SuiteOptions& options,
                                                       std::span<const Token> eval_tokens);

// identity, affine 0.5 and 2.0, tanh alpha 1..3, power 1.5 and 0.5.
std::vector<CentroidTransform> monotone_sweep_transforms();
std::vector<PerturbationRecord> run_monotone_sweep(const ToyModel& model, const LayerSelector& sel,
                                                   std::span<const CentroidTransform> grid,
                                                   const SuiteOptions& options,
                                                   std::span<const Token> eval_tokens);

// Block 0, middle and last gate projections plus the middle q projection.
std::vector<LayerSelector> depth_selectors(const ModelConfig& config);
// sign_preserving_shuffle, sign_scramble_shift, gaussian_random, sorted_gaussian.
std::vector<CentroidTransform> depth_conditions();
// Identity control plus every condition at every selector.
std::vector<PerturbationRecord> run_depth_suite(const ToyModel& model, std::span<const LayerSelector> selectors,
                                                const SuiteOptions& options, std::span<const Token> eval_tokens);

LayerSelector default_selector(const ModelConfig& config);

struct ProgressivePoint {
  std::size_t blocks_replaced = 0;
  double fraction_pct = 0.0;
  double ppl = 0.0;
  double ppl_ratio = 0.0;
  double rel_l2 = 0.0;  // pooled over every replaced projection
  double mu = 0.0, sigma2 = 0.0;  // pooled reconstructed moments of replaced projections
  double rank_distance = 0.0;     // mean over replaced projections
  double ms = 0.0;
};

struct ProgressiveCurve {
  std::string model_id;
  CentroidTransform transform;
  std::uint64_t seed = 0;
  double baseline_ppl = 0.0;  // every projection clustered, none transformed
  std::vector<ProgressivePoint> points;

  std::vector<PerturbationRecord> records() const;
};

// Per-projection clusterings of the whole model at K, by selector order.
std::vector<ClusteredMatrix> cluster_all(const ToyModel& model, std::size_t k, const KMeansOptions& kmeans);

// Transforms all seven projections of one block at a time, deepest first,
// measuring PPL after every `stride` blocks and after the last.
ProgressiveCurve run_progressive(const ToyModel& model, const CentroidTransform& transform, std::size_t stride,
                                 std::uint64_t seed, std::span<const ClusteredMatrix> clustered,
                                 std::span<const Token> eval_tokens);

struct CoverageReport {
  std::string name;
  std::size_t k = 0;
  std::vector<std::uint64_t> counts_desc;
  std::vector<double> cumulative_share;
  double target_share = 0.9;
  std::size_t clusters_for_target = 0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
};

CoverageReport coverage_report(const ClusteredMatrix& cm, std::string name = {}, double target_share = 0.9);

struct BenchRow {
  std::string path;  // dense, rebuild, lut
  std::size_t reps = 0;
  double mean_ms = 0.0;
  double ratio = 0.0;  // mean_ms / dense mean_ms
  double setup_ms = 0.0;
};

struct BenchOptions {
  std::size_t k = 32;
  std::size_t prompt_tokens = 32;
  std::size_t generated_tokens = 32;
  std::size_t reps = 3;
  KMeansOptions kmeans;
};

// Greedy generation without a KV cache along three execution paths: the
// dense model, reconstructed-once dense weights, and the per-step LUT kernel.
std::vector<BenchRow> bench_execution_paths(const ToyModel& model, std::span<const Token> prompt_source,
                                            const BenchOptions& options);

// N x O product using the label/centroid LUT path for every row of x.
RowMatrix lut_matmul(const ClusteredMatrix& cm, const RowMatrix& x);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

double median(std::vector<double> values);

}  // namespace rankclust
