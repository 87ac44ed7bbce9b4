#include "rankclust/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "rankclust/error.hpp"

namespace rankclust {

std::uint64_t ValueHistogram::total() const noexcept {
  return std::accumulate(weights.begin(), weights.end(), std::uint64_t{0});
}

ValueHistogram histogram(std::span<const float> values) {
  if (values.empty()) throw InvalidInput("histogram: empty input");
  std::vector<float> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  ValueHistogram h;
  for (float v : sorted) {
    // -0.0 and +0.0 compare equal and land in one bin.
    if (!h.values.empty() && h.values.back() == v) {
      ++h.weights.back();
    } else {
      h.values.push_back(v);
      h.weights.push_back(1);
    }
  }
  return h;
}

ValueHistogram histogram(const DenseMatrix& w) { return histogram(w.values()); }

std::size_t Codebook::assign(double value) const noexcept {
  // centroids ascending; find the first centroid whose lower midpoint is
  // strictly below value.
  std::size_t lo = 0, hi = centroids.size() - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    const double boundary = 0.5 * (centroids[mid] + centroids[mid + 1]);
    if (value > boundary) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  return lo;
}

namespace {

// Prefix sums over the histogram so any contiguous run's weight, first and
// second moments are O(1).
struct Prefix {
  std::vector<double> w, s, ss;

  explicit Prefix(const ValueHistogram& h) : w(h.distinct() + 1), s(h.distinct() + 1), ss(h.distinct() + 1) {
    for (std::size_t i = 0; i < h.distinct(); ++i) {
      const double wi = static_cast<double>(h.weights[i]);
      const double v = h.values[i];
      w[i + 1] = w[i] + wi;
      s[i + 1] = s[i] + wi * v;
      ss[i + 1] = ss[i] + wi * v * v;
    }
  }
  double weight(std::size_t a, std::size_t b) const { return w[b] - w[a]; }
  double mean(std::size_t a, std::size_t b) const { return (s[b] - s[a]) / weight(a, b); }
};

// Weighted SSE of values [a, b) around their mean, computed directly to avoid
// the cancellation in ss - s^2/w.
double run_cost(const ValueHistogram& h, std::size_t a, std::size_t b, double mean) {
  double c = 0.0;
  for (std::size_t i = a; i < b; ++i) {
    const double d = h.values[i] - mean;
    c += static_cast<double>(h.weights[i]) * d * d;
  }
  return c;
}

// Weighted quantile: smallest value whose cumulative weight reaches q * total.
double weighted_quantile(const ValueHistogram& h, const Prefix& p, double q) {
  const double target = q * p.w.back();
  auto it = std::lower_bound(p.w.begin() + 1, p.w.end(), target);
  std::size_t idx = static_cast<std::size_t>(std::distance(p.w.begin() + 1, it));
  idx = std::min(idx, h.distinct() - 1);
  return h.values[idx];
}

// Assignment boundaries: first[k] = first histogram index assigned to k.
std::vector<std::size_t> boundaries(const ValueHistogram& h, const Codebook& cb) {
  const std::size_t k = cb.k();
  std::vector<std::size_t> first(k + 1, h.distinct());
  first[0] = 0;
  for (std::size_t j = 1; j < k; ++j) {
    const double boundary = 0.5 * (cb.centroids[j - 1] + cb.centroids[j]);
    // Values <= boundary belong to a lower cluster.
    auto it = std::upper_bound(h.values.begin(), h.values.end(), boundary,
                               [](double b, float v) { return b < static_cast<double>(v); });
    first[j] = static_cast<std::size_t>(std::distance(h.values.begin(), it));
  }
  for (std::size_t j = 1; j <= k; ++j) first[j] = std::max(first[j], first[j - 1]);
  return first;
}

}  // namespace

double quantization_cost(const ValueHistogram& h, const Codebook& codebook) {
  double cost = 0.0;
  for (std::size_t i = 0; i < h.distinct(); ++i) {
    const double d = h.values[i] - codebook.centroids[codebook.assign(h.values[i])];
    cost += static_cast<double>(h.weights[i]) * d * d;
  }
  return cost;
}

KMeansResult kmeans_1d(const ValueHistogram& h, std::size_t k, const KMeansOptions& opts) {
  if (h.distinct() == 0) throw InvalidInput("kmeans_1d: empty histogram");
  if (k == 0) throw InvalidInput("kmeans_1d: K must be positive");
  if (k > h.distinct()) {
    throw InvalidInput(fmt::format("kmeans_1d: K={} exceeds the {} distinct values", k,
                                   h.distinct()));
  }
  if (opts.max_iter <= 0) throw InvalidInput("kmeans_1d: max_iter must be positive");
  const double range = static_cast<double>(h.values.back()) - h.values.front();
  const double tol = opts.tol.value_or(1e-7 * range);
  if (opts.tol && !(tol > 0.0)) throw InvalidInput("kmeans_1d: tol must be positive");

  const Prefix prefix(h);

  Codebook cb;
  cb.centroids.resize(k);
  if (opts.seed == 0) {
    for (std::size_t j = 0; j < k; ++j) {
      cb.centroids[j] = weighted_quantile(h, prefix, (static_cast<double>(j) + 0.5) / static_cast<double>(k));
    }
  } else {
    // Quantile starts never land on light outlying values, so every seed
    // would fall into the same basin. Other seeds use k-means++ (count
    // times squared distance) over the distinct values instead.
    std::mt19937_64 rng(opts.seed);
    std::vector<double> d2(h.distinct(), std::numeric_limits<double>::infinity());
    std::vector<double> w(h.distinct());
    for (std::size_t i = 0; i < h.distinct(); ++i) w[i] = static_cast<double>(h.weights[i]);
    std::size_t pick = std::discrete_distribution<std::size_t>(w.begin(), w.end())(rng);
    for (std::size_t j = 0; j < k; ++j) {
      cb.centroids[j] = h.values[pick];
      for (std::size_t i = 0; i < h.distinct(); ++i) {
        const double d = static_cast<double>(h.values[i]) - cb.centroids[j];
        d2[i] = std::min(d2[i], d * d);
        w[i] = static_cast<double>(h.weights[i]) * d2[i];
      }
      // Some weight stays positive while fewer than k distinct values are taken.
      if (j + 1 < k) pick = std::discrete_distribution<std::size_t>(w.begin(), w.end())(rng);
    }
  }
  std::sort(cb.centroids.begin(), cb.centroids.end());

  KMeansResult result;
  std::vector<std::size_t> first;
  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    result.iterations = iter;
    first = boundaries(h, cb);

    // Repair empty clusters by reseeding at the value with the largest
    // current quantization error, one at a time.
    bool repaired = false;
    for (std::size_t j = 0; j < k; ++j) {
      if (first[j] != first[j + 1]) continue;
      double worst = -1.0;
      std::size_t worst_idx = 0;
      for (std::size_t i = 0; i < h.distinct(); ++i) {
        const double d = std::abs(h.values[i] - cb.centroids[cb.assign(h.values[i])]);
        if (d > worst) {
          worst = d;
          worst_idx = i;
        }
      }
      cb.centroids[j] = h.values[worst_idx];
      std::sort(cb.centroids.begin(), cb.centroids.end());
      first = boundaries(h, cb);
      repaired = true;
      j = static_cast<std::size_t>(-1);  // rescan from the start
      if (worst <= 0.0) break;           // nothing left to split off
    }

    double moved = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (first[j] == first[j + 1]) continue;
      const double m = prefix.mean(first[j], first[j + 1]);
      moved = std::max(moved, std::abs(m - cb.centroids[j]));
      cb.centroids[j] = m;
    }
    if (!repaired && moved < tol) break;
    if (moved == 0.0) break;
  }

  // Lloyd stops at any partition where every value is nearest its own mean.
  // Moving a boundary value to the neighboring cluster can still lower the
  // cost once both means shift (Hartigan's criterion), so apply such moves
  // until none helps. Every Hartigan-stable partition is also Lloyd-stable.
  first = boundaries(h, cb);
  for (int pass = 0; pass < 100 * opts.max_iter; ++pass) {
    bool moved = false;
    for (std::size_t j = 0; j + 1 < k; ++j) {
      const std::size_t a0 = first[j], b0 = first[j + 1], b1 = first[j + 2];
      if (a0 == b0 || b0 == b1) continue;
      const double wa = prefix.weight(a0, b0), wb = prefix.weight(b0, b1);
      const double ma = prefix.mean(a0, b0), mb = prefix.mean(b0, b1);
      auto gain = [](double x, double wx, double w_from, double m_from, double w_to, double m_to) {
        return wx * w_from / (w_from - wx) * (x - m_from) * (x - m_from) -
               wx * w_to / (w_to + wx) * (x - m_to) * (x - m_to);
      };
      if (b0 - a0 > 1) {
        const double x = h.values[b0 - 1], wx = static_cast<double>(h.weights[b0 - 1]);
        const double g = gain(x, wx, wa, ma, wb, mb);
        if (g > 1e-12 * wx * (x - ma) * (x - ma)) {
          --first[j + 1];
          moved = true;
          continue;
        }
      }
      if (b1 - b0 > 1) {
        const double x = h.values[b0], wx = static_cast<double>(h.weights[b0]);
        const double g = gain(x, wx, wb, mb, wa, ma);
        if (g > 1e-12 * wx * (x - mb) * (x - mb)) {
          ++first[j + 1];
          moved = true;
        }
      }
    }
    if (!moved) break;
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (first[j] != first[j + 1]) cb.centroids[j] = prefix.mean(first[j], first[j + 1]);
  }

  first = boundaries(h, cb);
  result.codebook = cb;
  result.first_value.assign(first.begin(), first.end() - 1);
  for (std::size_t j = 0; j < k; ++j) {
    if (first[j] != first[j + 1]) {
      result.cost += run_cost(h, first[j], first[j + 1], cb.centroids[j]);
    }
  }
  return result;
}

ExactPartition exact_kmeans_dp(const ValueHistogram& h, std::size_t k) {
  const std::size_t u = h.distinct();
  if (u == 0) throw InvalidInput("exact_kmeans_dp: empty histogram");
  if (u > kExactDpMaxDistinct) {
    throw InvalidInput(fmt::format("exact_kmeans_dp: {} distinct values exceed the {} guard", u,
                                   kExactDpMaxDistinct));
  }
  if (k == 0 || k > u) {
    throw InvalidInput(fmt::format("exact_kmeans_dp: K={} must be in [1, {}]", k, u));
  }

  const Prefix p(h);
  auto seg = [&](std::size_t a, std::size_t b) {
    const double w = p.weight(a, b);
    const double s = p.s[b] - p.s[a];
    return std::max(0.0, (p.ss[b] - p.ss[a]) - s * s / w);
  };

  constexpr double inf = std::numeric_limits<double>::infinity();
  // cost[j][i]: best cost of splitting the first i values into j clusters.
  std::vector<std::vector<double>> cost(k + 1, std::vector<double>(u + 1, inf));
  std::vector<std::vector<std::size_t>> split(k + 1, std::vector<std::size_t>(u + 1, 0));
  cost[0][0] = 0.0;
  for (std::size_t j = 1; j <= k; ++j) {
    for (std::size_t i = j; i <= u; ++i) {
      for (std::size_t s = j - 1; s < i; ++s) {
        if (cost[j - 1][s] == inf) continue;
        const double c = cost[j - 1][s] + seg(s, i);
        if (c < cost[j][i]) {
          cost[j][i] = c;
          split[j][i] = s;
        }
      }
    }
  }

  ExactPartition out;
  out.centroids.resize(k);
  out.value_labels.resize(u);
  std::size_t end = u;
  for (std::size_t j = k; j >= 1; --j) {
    const std::size_t start = split[j][end];
    out.centroids[j - 1] = p.mean(start, end);
    for (std::size_t i = start; i < end; ++i) out.value_labels[i] = j - 1;
    out.cost += run_cost(h, start, end, out.centroids[j - 1]);
    end = start;
  }
  return out;
}

ClusteredMatrix cluster_matrix(const DenseMatrix& w, std::size_t k, const KMeansOptions& opts) {
  const ValueHistogram h = histogram(w);
  const KMeansResult km = kmeans_1d(h, k, opts);

  std::vector<float> centroids(k);
  for (std::size_t j = 0; j < k; ++j) centroids[j] = static_cast<float>(km.codebook.centroids[j]);

  // Label via the histogram boundaries, then look entries up by value.
  std::vector<Label> value_label(h.distinct());
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t end = j + 1 < k ? km.first_value[j + 1] : h.distinct();
    for (std::size_t i = km.first_value[j]; i < end; ++i) value_label[i] = static_cast<Label>(j);
  }
  std::vector<Label> labels(w.size());
  const auto values = w.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto it = std::lower_bound(h.values.begin(), h.values.end(), values[i]);
    labels[i] = value_label[static_cast<std::size_t>(std::distance(h.values.begin(), it))];
  }
  // Float rounding of nearby centroids can collide; canonical form merges them.
  return ClusteredMatrix::make_canonical(w.rows(), w.cols(), std::move(centroids),
                                         std::move(labels), w.role());
}

}  // namespace rankclust
