#include "rankclust/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <fmt/format.h>

#include "rankclust/error.hpp"

namespace rankclust {

FormatError::FormatError(const std::string& what, std::int64_t record, std::uint64_t offset)
    : std::runtime_error(fmt::format("{} (record {}, offset {})", what, record, offset)),
      record_(record),
      offset_(offset) {}

namespace {

constexpr std::string_view kRoleNames[] = {"q", "k", "v", "o", "gate", "up", "down", "other"};

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw InvalidInput(fmt::format("{}: length mismatch ({} vs {})", what, a, b));
  }
}

}  // namespace

std::string_view to_string(Role role) { return kRoleNames[static_cast<int>(role)]; }

Role parse_role(std::string_view text) {
  for (int i = 0; i < 8; ++i) {
    if (kRoleNames[i] == text) return static_cast<Role>(i);
  }
  throw InvalidInput(fmt::format("unknown projection role '{}'", text));
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<float> values,
                         Role role)
    : rows_(rows), cols_(cols), values_(std::move(values)), role_(role) {
  if (rows == 0 || cols == 0) {
    throw InvalidInput(fmt::format("matrix dimensions must be positive, got {}x{}", rows, cols));
  }
  if (values_.size() != rows * cols) {
    throw InvalidInput(fmt::format("matrix {}x{} needs {} values, got {}", rows, cols,
                                   rows * cols, values_.size()));
  }
  const auto bad = std::find_if(values_.begin(), values_.end(),
                                [](float v) { return !std::isfinite(v); });
  if (bad != values_.end()) {
    throw InvalidInput(fmt::format("non-finite matrix entry at flat index {}",
                                   std::distance(values_.begin(), bad)));
  }
}

DenseMatrix DenseMatrix::zeros(std::size_t rows, std::size_t cols, Role role) {
  return DenseMatrix(rows, cols, std::vector<float>(rows * cols, 0.0f), role);
}

DenseMatrix DenseMatrix::with_role(Role role) const {
  DenseMatrix out = *this;
  out.role_ = role;
  return out;
}

std::vector<float> matvec(const DenseMatrix& w, std::span<const float> x) {
  require_same_length(x.size(), w.rows(), "matvec");
  std::vector<float> y(w.cols(), 0.0f);
  for (std::size_t d = 0; d < w.rows(); ++d) {
    const float xd = x[d];
    const auto row = w.row(d);
    for (std::size_t o = 0; o < row.size(); ++o) y[o] += xd * row[o];
  }
  return y;
}

WeightStats stats(std::span<const float> values) {
  if (values.empty()) throw InvalidInput("stats: empty input");
  WeightStats s;
  s.count = values.size();
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (float v : values) {
    sum += v;
    s.min = std::min<double>(s.min, v);
    s.max = std::max<double>(s.max, v);
  }
  s.mean = sum / static_cast<double>(s.count);
  double sq = 0.0;
  double comp = 0.0;
  for (float v : values) {
    const double dv = static_cast<double>(v) - s.mean;
    sq += dv * dv;
    comp += dv;
  }
  // Corrected two-pass: removes the residual from rounding in the mean.
  const double n = static_cast<double>(s.count);
  s.variance = std::max(0.0, (sq - comp * comp / n) / n);
  // Mean may round a hair outside [min, max] for constant inputs.
  s.mean = std::clamp(s.mean, s.min, s.max);
  return s;
}

WeightStats stats(const DenseMatrix& w) { return stats(w.values()); }

std::vector<float> layer_norm(std::span<const float> x, std::span<const float> gain,
                              std::span<const float> bias, float eps) {
  require_same_length(x.size(), gain.size(), "layer_norm gain");
  require_same_length(x.size(), bias.size(), "layer_norm bias");
  if (x.empty()) throw InvalidInput("layer_norm: empty input");
  if (!(eps >= 0.0f)) throw InvalidInput("layer_norm: eps must be non-negative");

  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (float v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= n;

  const double denom = var + eps;
  const double inv = denom > 0.0 ? 1.0 / std::sqrt(denom) : 0.0;
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = static_cast<float>(gain[i] * ((x[i] - mean) * inv) + bias[i]);
  }
  return out;
}

std::vector<float> rms_norm(std::span<const float> x, std::span<const float> gain, float eps) {
  require_same_length(x.size(), gain.size(), "rms_norm gain");
  if (x.empty()) throw InvalidInput("rms_norm: empty input");
  if (!(eps >= 0.0f)) throw InvalidInput("rms_norm: eps must be non-negative");

  double ms = 0.0;
  for (float v : x) ms += static_cast<double>(v) * v;
  ms /= static_cast<double>(x.size());
  const double denom = ms + eps;
  const double inv = denom > 0.0 ? 1.0 / std::sqrt(denom) : 0.0;
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = static_cast<float>(gain[i] * (x[i] * inv));
  }
  return out;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  require_same_length(a.size(), b.size(), "cosine_similarity");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw InvalidInput("cosine_similarity: zero-norm vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

}  // namespace rankclust
