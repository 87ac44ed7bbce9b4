#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rankclust/clustered_matrix.hpp"

namespace rankclust {

enum class TransformKind {
  identity,
  affine,                   // c' = a c + b
  tanh_scale,               // tanh(alpha c), rescaled so max |c| is kept
  power,                    // sign(c) |c|^gamma
  sorted_gaussian,          // Gaussian draws assigned in rank order
  gaussian_random,          // Gaussian draws, unsorted
  random_permutation,       // shuffle of the original centroids
  sign_preserving_shuffle,  // shuffle within negative and positive slots
  sign_scramble_shift,      // c + b, b = -(c_min + c_max) / 2
  freq_weighted_monotone,   // sorted draws placed at count-weighted quantiles
};

enum class Correction { none, match_moments };

std::string_view to_string(TransformKind kind);
std::string_view to_string(Correction correction);

struct CentroidTransform {
  TransformKind kind = TransformKind::identity;
  double a = 1.0;      // affine scale
  double b = 0.0;      // affine shift
  double alpha = 1.0;  // tanh_scale
  double gamma = 1.0;  // power
  bool renormalize = true;  // tanh_scale: keep the extreme magnitude
  std::uint64_t seed = 0;
  Correction correction = Correction::none;

  static CentroidTransform identity() { return {}; }
  static CentroidTransform affine(double a, double b = 0.0);
  static CentroidTransform tanh_scale(double alpha);
  static CentroidTransform power(double gamma);
  static CentroidTransform seeded(TransformKind kind, std::uint64_t seed);

  CentroidTransform corrected() const {
    CentroidTransform t = *this;
    t.correction = Correction::match_moments;
    return t;
  }
  CentroidTransform with_seed(std::uint64_t s) const {
    CentroidTransform t = *this;
    t.seed = s;
    return t;
  }

  bool uses_seed() const noexcept;
  // Whether the kind keeps centroid rank order by construction.
  bool rank_preserving() const noexcept;

  // Text form, e.g. "affine:a=0.5,b=0.01" or "sorted_gaussian:seed=7,correct=moments".
  // to_text() omits the seed so the same transform text labels every seed of
  // a sweep; to_text(true) includes it.
  std::string to_text(bool include_seed = false) const;
  static CentroidTransform parse(std::string_view text);

  friend bool operator==(const CentroidTransform&, const CentroidTransform&) = default;
};

// Replaces centroids per the transform, keeping labels and counts. With
// Correction::match_moments the result is affinely matched to the input's
// reconstructed mean and variance.
ClusteredMatrix apply(const ClusteredMatrix& cm, const CentroidTransform& t);

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

// a * c + b with a = sigma_target / sigma_current > 0 and b chosen so the
// count-weighted mean and variance equal the target.
std::vector<double> moment_match(std::span<const double> centroids,
                                 std::span<const std::uint64_t> counts, Moments target);

// Normalized Kendall distance: discordant index pairs / (K (K - 1) / 2).
double rank_distance(std::span<const float> before, std::span<const float> after);

}  // namespace rankclust
