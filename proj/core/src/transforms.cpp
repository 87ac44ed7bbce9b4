#include "rankclust/transforms.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "rankclust/codec.hpp"
#include "rankclust/error.hpp"

namespace rankclust {

namespace {

struct KindName {
  TransformKind kind;
  std::string_view name;
};

constexpr KindName kKinds[] = {
    {TransformKind::identity, "identity"},
    {TransformKind::affine, "affine"},
    {TransformKind::tanh_scale, "tanh_scale"},
    {TransformKind::power, "power"},
    {TransformKind::sorted_gaussian, "sorted_gaussian"},
    {TransformKind::gaussian_random, "gaussian_random"},
    {TransformKind::random_permutation, "random_permutation"},
    {TransformKind::sign_preserving_shuffle, "sign_preserving_shuffle"},
    {TransformKind::sign_scramble_shift, "sign_scramble_shift"},
    {TransformKind::freq_weighted_monotone, "freq_weighted_monotone"},
};

double parse_number(std::string_view key, std::string_view value) {
  // std::from_chars for double is available in libstdc++ 11.
  double out = 0.0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) {
    throw InvalidInput(fmt::format("transform parameter {}: '{}' is not a number", key, value));
  }
  return out;
}

std::uint64_t parse_seed(std::string_view value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw InvalidInput(fmt::format("transform seed '{}' is not a non-negative integer", value));
  }
  return out;
}

std::string fmt_num(double v) { return fmt::format("{}", v); }

Moments weighted_moments(std::span<const double> c, std::span<const std::uint64_t> n) {
  double total = 0.0, mean = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) total += static_cast<double>(n[k]);
  if (total <= 0.0) throw InvalidInput("moments: cluster counts sum to zero");
  for (std::size_t k = 0; k < c.size(); ++k) mean += static_cast<double>(n[k]) / total * c[k];
  double var = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    var += static_cast<double>(n[k]) / total * (c[k] - mean) * (c[k] - mean);
  }
  return {mean, var};
}

// Indices of centroids in ascending value order (ties by index).
std::vector<std::size_t> rank_order(std::span<const float> c) {
  std::vector<std::size_t> order(c.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return c[a] < c[b]; });
  return order;
}

std::vector<double> gaussian_draws(std::size_t k, Moments m, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(m.mean, std::sqrt(m.variance));
  std::vector<double> out(k);
  for (auto& v : out) v = dist(rng);
  return out;
}

Moments require_spread(const ClusteredMatrix& cm, const CentroidTransform& t) {
  const WeightStats s = reconstructed_stats(cm);
  if (!(s.variance > 0.0)) {
    throw InvalidInput(fmt::format("{} needs reconstructed weights with nonzero variance",
                                   to_string(t.kind)));
  }
  return {s.mean, s.variance};
}

// Rounds to float and separates collisions by single-ulp steps. Collisions
// are ordered by the intended value, then by the input centroid's rank, so a
// monotone map stays strictly monotone.
std::vector<float> to_distinct_floats(std::span<const double> values,
                                      std::span<const float> original) {
  const std::size_t k = values.size();
  std::vector<float> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = static_cast<float>(values[i]);

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (out[x] != out[y]) return out[x] < out[y];
    return original[x] < original[y];
  });
  for (std::size_t r = 1; r < k; ++r) {
    float& prev = out[order[r - 1]];
    float& cur = out[order[r]];
    if (!(cur > prev)) cur = std::nextafter(prev, std::numeric_limits<float>::infinity());
  }
  return out;
}

}  // namespace

std::string_view to_string(TransformKind kind) {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k.name;
  }
  return "unknown";
}

std::string_view to_string(Correction correction) {
  return correction == Correction::none ? "none" : "moments";
}

CentroidTransform CentroidTransform::affine(double a, double b) {
  CentroidTransform t;
  t.kind = TransformKind::affine;
  t.a = a;
  t.b = b;
  return t;
}

CentroidTransform CentroidTransform::tanh_scale(double alpha) {
  CentroidTransform t;
  t.kind = TransformKind::tanh_scale;
  t.alpha = alpha;
  return t;
}

CentroidTransform CentroidTransform::power(double gamma) {
  CentroidTransform t;
  t.kind = TransformKind::power;
  t.gamma = gamma;
  return t;
}

CentroidTransform CentroidTransform::seeded(TransformKind kind, std::uint64_t seed) {
  CentroidTransform t;
  t.kind = kind;
  t.seed = seed;
  return t;
}

bool CentroidTransform::uses_seed() const noexcept {
  switch (kind) {
    case TransformKind::sorted_gaussian:
    case TransformKind::gaussian_random:
    case TransformKind::random_permutation:
    case TransformKind::sign_preserving_shuffle:
    case TransformKind::freq_weighted_monotone:
      return true;
    default:
      return false;
  }
}

bool CentroidTransform::rank_preserving() const noexcept {
  switch (kind) {
    case TransformKind::affine:
      return a > 0.0;
    case TransformKind::identity:
    case TransformKind::tanh_scale:
    case TransformKind::power:
    case TransformKind::sorted_gaussian:
    case TransformKind::freq_weighted_monotone:
    case TransformKind::sign_scramble_shift:
      return true;
    default:
      return false;
  }
}

std::string CentroidTransform::to_text(bool include_seed) const {
  std::vector<std::string> params;
  switch (kind) {
    case TransformKind::affine:
      params.push_back("a=" + fmt_num(a));
      params.push_back("b=" + fmt_num(b));
      break;
    case TransformKind::tanh_scale:
      params.push_back("alpha=" + fmt_num(alpha));
      if (!renormalize) params.push_back("renorm=0");
      break;
    case TransformKind::power:
      params.push_back("gamma=" + fmt_num(gamma));
      break;
    default:
      break;
  }
  if (include_seed && uses_seed()) params.push_back(fmt::format("seed={}", seed));
  if (correction == Correction::match_moments) params.push_back("correct=moments");
  std::string out(to_string(kind));
  if (!params.empty()) out += ":" + fmt::format("{}", fmt::join(params, ","));
  return out;
}

CentroidTransform CentroidTransform::parse(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view name = text.substr(0, colon);
  CentroidTransform t;
  bool found = false;
  for (const auto& k : kKinds) {
    if (k.name == name) {
      t.kind = k.kind;
      found = true;
    }
  }
  if (name == "tanh") {
    t.kind = TransformKind::tanh_scale;
    found = true;
  }
  if (!found) throw InvalidInput(fmt::format("unknown transform '{}'", name));

  std::string_view rest = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string_view item = rest.substr(0, comma);
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw InvalidInput(fmt::format("transform parameter '{}' is not key=value", item));
    }
    const std::string_view key = item.substr(0, eq);
    const std::string_view value = item.substr(eq + 1);
    if (key == "a") {
      t.a = parse_number(key, value);
    } else if (key == "b") {
      t.b = parse_number(key, value);
    } else if (key == "alpha") {
      t.alpha = parse_number(key, value);
    } else if (key == "gamma") {
      t.gamma = parse_number(key, value);
    } else if (key == "renorm") {
      t.renormalize = parse_number(key, value) != 0.0;
    } else if (key == "seed") {
      t.seed = parse_seed(value);
    } else if (key == "correct") {
      if (value == "moments") {
        t.correction = Correction::match_moments;
      } else if (value == "none") {
        t.correction = Correction::none;
      } else {
        throw InvalidInput(fmt::format("unknown correction '{}'", value));
      }
    } else {
      throw InvalidInput(fmt::format("unknown transform parameter '{}'", key));
    }
  }
  if (t.kind == TransformKind::tanh_scale && !(t.alpha > 0.0)) {
    throw InvalidInput("tanh_scale needs alpha > 0");
  }
  if (t.kind == TransformKind::power && !(t.gamma > 0.0)) {
    throw InvalidInput("power needs gamma > 0");
  }
  return t;
}

std::vector<double> moment_match(std::span<const double> centroids,
                                 std::span<const std::uint64_t> counts, Moments target) {
  if (centroids.size() != counts.size()) throw InvalidInput("moment_match: length mismatch");
  if (!(target.variance >= 0.0)) throw InvalidInput("moment_match: target variance is negative");
  const Moments current = weighted_moments(centroids, counts);
  if (!(current.variance > 0.0)) {
    throw InvalidInput("moment_match: centroids have zero weighted variance; no a > 0 exists");
  }
  const double a = std::sqrt(target.variance / current.variance);
  const double b = target.mean - a * current.mean;
  std::vector<double> out(centroids.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a * centroids[k] + b;
  return out;
}

ClusteredMatrix apply(const ClusteredMatrix& cm, const CentroidTransform& t) {
  const auto c = cm.centroids();
  const std::size_t k = c.size();
  std::vector<double> out(c.begin(), c.end());
  std::mt19937_64 rng(t.seed);

  switch (t.kind) {
    case TransformKind::identity:
      break;
    case TransformKind::affine:
      for (auto& v : out) v = t.a * v + t.b;
      break;
    case TransformKind::tanh_scale: {
      if (!(t.alpha > 0.0)) throw InvalidInput("tanh_scale needs alpha > 0");
      double peak = 0.0;
      for (float v : c) peak = std::max(peak, std::abs(static_cast<double>(v)));
      const double scale = (t.renormalize && peak > 0.0) ? peak / std::tanh(t.alpha * peak) : 1.0;
      for (auto& v : out) v = scale * std::tanh(t.alpha * v);
      break;
    }
    case TransformKind::power:
      if (!(t.gamma > 0.0)) throw InvalidInput("power needs gamma > 0");
      for (auto& v : out) v = std::copysign(std::pow(std::abs(v), t.gamma), v);
      break;
    case TransformKind::sorted_gaussian: {
      auto draws = gaussian_draws(k, require_spread(cm, t), rng);
      std::sort(draws.begin(), draws.end());
      const auto order = rank_order(c);
      for (std::size_t r = 0; r < k; ++r) out[order[r]] = draws[r];
      break;
    }
    case TransformKind::gaussian_random:
      out = gaussian_draws(k, require_spread(cm, t), rng);
      break;
    case TransformKind::random_permutation:
      std::shuffle(out.begin(), out.end(), rng);
      break;
    case TransformKind::sign_preserving_shuffle: {
      std::vector<std::size_t> neg, pos;
      for (std::size_t j = 0; j < k; ++j) {
        if (c[j] < 0.0f) neg.push_back(j);
        if (c[j] > 0.0f) pos.push_back(j);
      }
      for (auto* slots : {&neg, &pos}) {
        std::vector<double> vals;
        for (std::size_t j : *slots) vals.push_back(c[j]);
        std::shuffle(vals.begin(), vals.end(), rng);
        for (std::size_t i = 0; i < slots->size(); ++i) out[(*slots)[i]] = vals[i];
      }
      break;
    }
    case TransformKind::sign_scramble_shift: {
      const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
      const double shift = -(static_cast<double>(*lo) + *hi) / 2.0;
      for (auto& v : out) v += shift;
      break;
    }
    case TransformKind::freq_weighted_monotone: {
      const Moments m = require_spread(cm, t);
      // Empirical quantiles of a large sorted sample stand in for the
      // distribution; each rank takes the quantile at its cluster's
      // count-weighted midpoint.
      const std::size_t samples = std::max<std::size_t>(1024, 64 * k);
      auto draws = gaussian_draws(samples, m, rng);
      std::sort(draws.begin(), draws.end());
      const auto order = rank_order(c);
      const auto n = cm.counts();
      const double total = static_cast<double>(cm.size());
      double cum = 0.0;
      for (std::size_t r = 0; r < k; ++r) {
        const double nk = static_cast<double>(n[order[r]]);
        const double p = (cum + 0.5 * nk) / total;
        cum += nk;
        const auto idx = std::min<std::size_t>(samples - 1, static_cast<std::size_t>(p * samples));
        out[order[r]] = draws[idx];
      }
      break;
    }
  }

  if (t.correction == Correction::match_moments) {
    const WeightStats s = reconstructed_stats(cm);
    out = moment_match(out, cm.counts(), {s.mean, s.variance});
  }
  for (double v : out) {
    if (!std::isfinite(v) || std::abs(v) > std::numeric_limits<float>::max()) {
      throw InvalidInput(fmt::format("{} produced a non-finite centroid", to_string(t.kind)));
    }
  }
  return cm.with_centroids(to_distinct_floats(out, c));
}

double rank_distance(std::span<const float> before, std::span<const float> after) {
  if (before.size() != after.size()) throw InvalidInput("rank_distance: length mismatch");
  const std::size_t k = before.size();
  if (k < 2) throw InvalidInput("rank_distance: needs at least two centroids");
  for (auto seq : {before, after}) {
    std::vector<float> sorted(seq.begin(), seq.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw InvalidInput("rank_distance: duplicate centroid values make rank undefined");
    }
  }
  // Order indices by `before`, then count inversions of `after` along that
  // order with a merge sort.
  const auto order = rank_order(before);
  std::vector<float> seq(k);
  for (std::size_t i = 0; i < k; ++i) seq[i] = after[order[i]];
  std::vector<float> buf(k);
  std::uint64_t inversions = 0;
  for (std::size_t width = 1; width < k; width *= 2) {
    for (std::size_t lo = 0; lo < k; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, k), hi = std::min(lo + 2 * width, k);
      std::size_t i = lo, j = mid, o = lo;
      while (i < mid && j < hi) {
        if (seq[j] < seq[i]) {
          inversions += mid - i;
          buf[o++] = seq[j++];
        } else {
          buf[o++] = seq[i++];
        }
      }
      while (i < mid) buf[o++] = seq[i++];
      while (j < hi) buf[o++] = seq[j++];
    }
    std::swap(seq, buf);
  }
  const double pairs = static_cast<double>(k) * static_cast<double>(k - 1) / 2.0;
  return static_cast<double>(inversions) / pairs;
}

}  // namespace rankclust
