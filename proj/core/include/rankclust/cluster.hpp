#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rankclust/clustered_matrix.hpp"
#include "rankclust/tensor.hpp"

namespace rankclust {

// Exact multiset of matrix entries: ascending distinct values with occurrence
// counts.
struct ValueHistogram {
  std::vector<float> values;
  std::vector<std::uint64_t> weights;

  std::size_t distinct() const noexcept { return values.size(); }
  std::uint64_t total() const noexcept;
};

ValueHistogram histogram(std::span<const float> values);
ValueHistogram histogram(const DenseMatrix& w);

struct KMeansOptions {
  // Convergence threshold on the largest centroid move. When unset, defaults
  // to 1e-7 * (max - min) of the data.
  std::optional<double> tol;
  int max_iter = 200;
  // Seed 0 places centroids at the stratum midpoints of the weighted quantile
  // function; other seeds use k-means++ seeding over the distinct values.
  // Lloyd is followed by Hartigan boundary moves between neighbors.
  std::uint64_t seed = 0;
};

// Nearest-centroid rule over ascending centroids. A value exactly halfway
// between two centroids goes to the lower index.
struct Codebook {
  std::vector<double> centroids;

  std::size_t k() const noexcept { return centroids.size(); }
  std::size_t assign(double value) const noexcept;
};

struct KMeansResult {
  Codebook codebook;
  // first_value[k] is the index into the histogram of the first distinct value
  // assigned to cluster k (clusters are contiguous in sorted order).
  std::vector<std::size_t> first_value;
  double cost = 0.0;  // weighted within-cluster sum of squares
  int iterations = 0;
};

KMeansResult kmeans_1d(const ValueHistogram& h, std::size_t k, const KMeansOptions& opts = {});

// Weighted within-cluster sum of squares of h under the codebook's assignment.
double quantization_cost(const ValueHistogram& h, const Codebook& codebook);

inline constexpr std::size_t kExactDpMaxDistinct = 4096;

struct ExactPartition {
  std::vector<double> centroids;
  // Cluster index per distinct histogram value.
  std::vector<std::size_t> value_labels;
  double cost = 0.0;
};

// Globally optimal 1-D K-means by dynamic programming over contiguous
// partitions of the sorted distinct values. O(K * U^2); U <= 4096.
ExactPartition exact_kmeans_dp(const ValueHistogram& h, std::size_t k);

// Clusters all entries of w into k shared values. The result is canonical.
ClusteredMatrix cluster_matrix(const DenseMatrix& w, std::size_t k, const KMeansOptions& opts = {});

}  // namespace rankclust
