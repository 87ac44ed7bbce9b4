#include "rankclust/clustered_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "rankclust/error.hpp"

namespace rankclust {

ClusteredMatrix::ClusteredMatrix(std::size_t rows, std::size_t cols, std::vector<float> centroids,
                                 std::vector<Label> labels, Role role)
    : rows_(rows), cols_(cols), centroids_(std::move(centroids)), role_(role) {
  if (rows == 0 || cols == 0) {
    throw InvalidInput(fmt::format("clustered matrix dimensions must be positive, got {}x{}",
                                   rows, cols));
  }
  if (centroids_.empty() || centroids_.size() > std::numeric_limits<Label>::max()) {
    throw InvalidInput(fmt::format("K must be in [1, 65535], got {}", centroids_.size()));
  }
  if (labels.size() != rows * cols) {
    throw InvalidInput(fmt::format("expected {} labels, got {}", rows * cols, labels.size()));
  }
  for (float c : centroids_) {
    if (!std::isfinite(c)) throw InvalidInput("non-finite centroid");
  }
  auto counts = std::make_shared<std::vector<std::uint64_t>>(centroids_.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= centroids_.size()) {
      throw InvalidInput(fmt::format("label {} at flat index {} out of range for K={}",
                                     labels[i], i, centroids_.size()));
    }
    ++(*counts)[labels[i]];
  }
  labels_ = std::make_shared<const std::vector<Label>>(std::move(labels));
  counts_ = std::move(counts);
}

ClusteredMatrix ClusteredMatrix::make_canonical(std::size_t rows, std::size_t cols,
                                                std::vector<float> centroids,
                                                std::vector<Label> labels, Role role) {
  return ClusteredMatrix(rows, cols, std::move(centroids), std::move(labels), role).canonicalize();
}

ClusteredMatrix ClusteredMatrix::with_centroids(std::vector<float> centroids) const {
  if (centroids.size() != centroids_.size()) {
    throw InvalidInput(fmt::format("with_centroids: expected {} centroids, got {}",
                                   centroids_.size(), centroids.size()));
  }
  for (float c : centroids) {
    if (!std::isfinite(c)) throw InvalidInput("non-finite centroid");
  }
  ClusteredMatrix out = *this;
  out.centroids_ = std::move(centroids);
  return out;
}

bool ClusteredMatrix::is_canonical() const noexcept {
  for (std::size_t k = 1; k < centroids_.size(); ++k) {
    if (!(centroids_[k - 1] < centroids_[k])) return false;
  }
  return true;
}

ClusteredMatrix ClusteredMatrix::canonicalize() const {
  if (is_canonical()) return *this;

  const std::size_t k = centroids_.size();
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return centroids_[a] < centroids_[b]; });

  std::vector<float> merged;
  std::vector<Label> remap(k);
  for (std::size_t idx : order) {
    if (merged.empty() || merged.back() != centroids_[idx]) merged.push_back(centroids_[idx]);
    remap[idx] = static_cast<Label>(merged.size() - 1);
  }
  std::vector<Label> labels(labels_->size());
  std::transform(labels_->begin(), labels_->end(), labels.begin(),
                 [&](Label l) { return remap[l]; });
  return ClusteredMatrix(rows_, cols_, std::move(merged), std::move(labels), role_);
}

bool operator==(const ClusteredMatrix& a, const ClusteredMatrix& b) {
  return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.role_ == b.role_ &&
         a.centroids_ == b.centroids_ && *a.labels_ == *b.labels_;
}

}  // namespace rankclust
