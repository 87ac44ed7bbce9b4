#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "rankclust/tensor.hpp"

namespace rankclust {

using Label = std::uint16_t;

// A weight matrix stored as a label per entry plus K shared centroid values:
// reconstructed[d, o] = centroids[labels[d, o]].
//
// Matrices produced by clustering are canonical: centroids strictly ascending,
// so a label's index is also its rank. Centroid transforms keep the labels and
// may leave the centroids in any (distinct) order; canonicalize() restores the
// ascending form by relabeling.
class ClusteredMatrix {
 public:
  ClusteredMatrix() = default;

  // Validates labels < K and computes counts. Centroids are kept in the order
  // given; use canonicalize() or make_canonical() for the ascending form.
  ClusteredMatrix(std::size_t rows, std::size_t cols, std::vector<float> centroids,
                  std::vector<Label> labels, Role role = Role::other);

  // Sorts centroids, merges equal values and remaps labels.
  static ClusteredMatrix make_canonical(std::size_t rows, std::size_t cols,
                                        std::vector<float> centroids, std::vector<Label> labels,
                                        Role role = Role::other);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return rows_ * cols_; }
  std::size_t k() const noexcept { return centroids_.size(); }
  Role role() const noexcept { return role_; }

  std::span<const float> centroids() const noexcept { return centroids_; }
  std::span<const Label> labels() const noexcept { return *labels_; }
  std::span<const std::uint64_t> counts() const noexcept { return *counts_; }
  Label label(std::size_t d, std::size_t o) const noexcept { return (*labels_)[d * cols_ + o]; }

  // Same labels and counts (shared, not copied), new centroid values.
  ClusteredMatrix with_centroids(std::vector<float> centroids) const;

  bool is_canonical() const noexcept;
  ClusteredMatrix canonicalize() const;

  // True when both matrices reference the same label storage.
  bool shares_labels_with(const ClusteredMatrix& other) const noexcept {
    return labels_ == other.labels_;
  }

  friend bool operator==(const ClusteredMatrix& a, const ClusteredMatrix& b);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> centroids_;
  std::shared_ptr<const std::vector<Label>> labels_ = std::make_shared<std::vector<Label>>();
  std::shared_ptr<const std::vector<std::uint64_t>> counts_ =
      std::make_shared<std::vector<std::uint64_t>>();
  Role role_ = Role::other;
};

}  // namespace rankclust
