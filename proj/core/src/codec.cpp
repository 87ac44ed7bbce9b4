#include "rankclust/codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "rankclust/error.hpp"
#include "rankclust/half.hpp"

namespace rankclust {

DenseMatrix reconstruct(const ClusteredMatrix& cm) {
  const auto c = cm.centroids();
  const auto labels = cm.labels();
  std::vector<float> values(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) values[i] = c[labels[i]];
  return DenseMatrix(cm.rows(), cm.cols(), std::move(values), cm.role());
}

WeightStats reconstructed_stats(const ClusteredMatrix& cm) {
  const auto c = cm.centroids();
  const auto n = cm.counts();
  WeightStats s;
  s.count = cm.size();
  const double total = static_cast<double>(s.count);
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  double mean = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    if (n[k] == 0) continue;
    mean += static_cast<double>(n[k]) / total * c[k];
    s.min = std::min<double>(s.min, c[k]);
    s.max = std::max<double>(s.max, c[k]);
  }
  double var = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    const double d = c[k] - mean;
    var += static_cast<double>(n[k]) / total * d * d;
  }
  s.mean = std::clamp(mean, s.min, s.max);
  s.variance = var;
  return s;
}

double rel_l2_change(const ClusteredMatrix& before, const ClusteredMatrix& after) {
  if (before.rows() != after.rows() || before.cols() != after.cols() || before.k() != after.k()) {
    throw InvalidInput("rel_l2_change: shape or K mismatch");
  }
  if (!before.shares_labels_with(after) &&
      !std::equal(before.labels().begin(), before.labels().end(), after.labels().begin())) {
    throw InvalidInput("rel_l2_change: matrices do not share labels");
  }
  const auto n = before.counts();
  const auto c0 = before.centroids();
  const auto c1 = after.centroids();
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < c0.size(); ++k) {
    const double nk = static_cast<double>(n[k]);
    const double d = static_cast<double>(c1[k]) - c0[k];
    num += nk * d * d;
    den += nk * static_cast<double>(c0[k]) * c0[k];
  }
  if (den == 0.0) throw InvalidInput("rel_l2_change: baseline matrix has zero norm");
  return std::sqrt(num / den);
}

std::vector<float> lut_matvec(const ClusteredMatrix& cm, std::span<const float> x) {
  if (x.size() != cm.rows()) {
    throw InvalidInput(fmt::format("lut_matvec: input length {} but D={}", x.size(), cm.rows()));
  }
  const std::size_t k = cm.k();
  const std::size_t cols = cm.cols();
  const auto labels = cm.labels();
  const auto c = cm.centroids();

  std::vector<float> partial(cols * k, 0.0f);
  for (std::size_t d = 0; d < cm.rows(); ++d) {
    const float xd = x[d];
    const Label* row = labels.data() + d * cols;
    for (std::size_t o = 0; o < cols; ++o) partial[o * k + row[o]] += xd;
  }
  std::vector<float> y(cols, 0.0f);
  for (std::size_t o = 0; o < cols; ++o) {
    const float* p = partial.data() + o * k;
    float acc = 0.0f;
    for (std::size_t j = 0; j < k; ++j) acc += c[j] * p[j];
    y[o] = acc;
  }
  return y;
}

unsigned label_bits(std::size_t k) noexcept {
  return k <= 1 ? 0u : static_cast<unsigned>(std::bit_width(k - 1));
}

std::uint64_t packed_label_bytes(std::size_t entries, std::size_t k) noexcept {
  return (static_cast<std::uint64_t>(entries) * label_bits(k) + 7) / 8;
}

RecordSize record_size(std::string_view name, std::size_t entries, std::size_t k) noexcept {
  RecordSize r;
  r.header = 2 + name.size() + 4 + 4 + 2 + 1 + 8;
  r.centroids = 2 * static_cast<std::uint64_t>(k);
  r.labels = packed_label_bytes(entries, k);
  return r;
}

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i)));
    }
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint64_t offset() const noexcept { return pos_; }
  void set_record(std::int64_t r) noexcept { record_ = r; }

  [[noreturn]] void fail(const std::string& what) const { throw FormatError(what, record_, pos_); }

  std::span<const std::uint8_t> take(std::uint64_t n, const char* what) {
    if (n > in_.size() - pos_) {
      fail(fmt::format("truncated {}: need {} bytes, {} left", what, n, in_.size() - pos_));
    }
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  T le(const char* what) {
    const auto s = take(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(s[i]) << (8 * i);
    return static_cast<T>(v);
  }
  bool done() const noexcept { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::uint64_t pos_ = 0;
  std::int64_t record_ = -1;
};

void pack_labels(std::span<const Label> labels, unsigned bits, std::vector<std::uint8_t>& out) {
  if (bits == 0) return;
  const std::size_t start = out.size();
  out.resize(start + (labels.size() * bits + 7) / 8, 0);
  std::uint8_t* dst = out.data() + start;
  std::uint64_t bitpos = 0;
  for (Label l : labels) {
    for (unsigned b = 0; b < bits; ++b, ++bitpos) {
      if ((l >> b) & 1u) dst[bitpos >> 3] |= static_cast<std::uint8_t>(1u << (bitpos & 7));
    }
  }
}

std::uint16_t checked_half(float v, const std::string& name) {
  const std::uint16_t h = float_to_half(v);
  if ((h & 0x7c00u) == 0x7c00u) {
    throw InvalidInput(fmt::format("tensor '{}' has value {} outside the binary16 range", name, v));
  }
  return h;
}

void check_shape_fits(const std::string& name, std::size_t rows, std::size_t cols) {
  constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
  if (rows > kMax || cols > kMax) {
    throw InvalidInput(fmt::format("tensor '{}' is too large for the container", name));
  }
}

}  // namespace

std::vector<std::uint8_t> write_container(std::span<const WcxRecord> records) {
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (r.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw InvalidInput(fmt::format("tensor name too long ({} bytes)", r.name.size()));
    }
    if (!seen.insert(r.name).second) {
      throw InvalidInput(fmt::format("duplicate tensor name '{}'", r.name));
    }
  }
  if (records.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidInput("too many tensors for one container");
  }

  Writer w;
  w.bytes(kWcxMagic, 4);
  w.le<std::uint16_t>(kWcxVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    w.le<std::uint16_t>(static_cast<std::uint16_t>(r.name.size()));
    w.bytes(r.name.data(), r.name.size());
    if (const auto* cm = std::get_if<ClusteredMatrix>(&r.tensor)) {
      check_shape_fits(r.name, cm->rows(), cm->cols());
      w.le<std::uint32_t>(static_cast<std::uint32_t>(cm->rows()));
      w.le<std::uint32_t>(static_cast<std::uint32_t>(cm->cols()));
      w.le<std::uint16_t>(static_cast<std::uint16_t>(cm->k()));
      w.le<std::uint8_t>(static_cast<std::uint8_t>(CompressionMode::none));
      for (float c : cm->centroids()) w.le<std::uint16_t>(checked_half(c, r.name));
      w.le<std::uint64_t>(packed_label_bytes(cm->size(), cm->k()));
      pack_labels(cm->labels(), label_bits(cm->k()), w.buffer());
    } else {
      const auto& dm = std::get<DenseMatrix>(r.tensor);
      check_shape_fits(r.name, dm.rows(), dm.cols());
      w.le<std::uint32_t>(static_cast<std::uint32_t>(dm.rows()));
      w.le<std::uint32_t>(static_cast<std::uint32_t>(dm.cols()));
      w.le<std::uint16_t>(0);
      w.le<std::uint8_t>(static_cast<std::uint8_t>(CompressionMode::dense_half));
      w.le<std::uint64_t>(2 * static_cast<std::uint64_t>(dm.size()));
      for (float v : dm.values()) w.le<std::uint16_t>(checked_half(v, r.name));
    }
  }
  return std::move(w.buffer());
}

std::vector<WcxRecord> read_container(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kWcxMagic, 4) != 0) {
    throw FormatError("bad magic (expected \"WCX1\")", -1, 0);
  }
  const auto version = r.le<std::uint16_t>("version");
  if (version != kWcxVersion) {
    throw FormatError(fmt::format("unsupported version {}", version), -1, 4);
  }
  const auto count = r.le<std::uint32_t>("tensor count");

  std::vector<WcxRecord> out;
  std::set<std::string> seen;
  for (std::uint32_t idx = 0; idx < count; ++idx) {
    r.set_record(idx);
    const auto name_len = r.le<std::uint16_t>("name length");
    const auto name_bytes = r.take(name_len, "name");
    std::string name(name_bytes.begin(), name_bytes.end());
    if (!seen.insert(name).second) r.fail(fmt::format("duplicate tensor name '{}'", name));
    const auto rows = r.le<std::uint32_t>("rows");
    const auto cols = r.le<std::uint32_t>("cols");
    const auto k = r.le<std::uint16_t>("K");
    const auto mode = r.le<std::uint8_t>("compression mode");
    if (rows == 0 || cols == 0) r.fail(fmt::format("tensor '{}' has a zero dimension", name));
    const std::uint64_t entries = static_cast<std::uint64_t>(rows) * cols;

    if (mode == static_cast<std::uint8_t>(CompressionMode::dense_half)) {
      if (k != 0) r.fail(fmt::format("dense tensor '{}' must have K=0", name));
      const auto len = r.le<std::uint64_t>("payload length");
      if (len != 2 * entries) {
        r.fail(fmt::format("dense tensor '{}' payload is {} bytes, expected {}", name, len,
                           2 * entries));
      }
      const auto payload = r.take(len, "dense payload");
      std::vector<float> values(entries);
      for (std::uint64_t i = 0; i < entries; ++i) {
        values[i] = half_to_float(static_cast<std::uint16_t>(payload[2 * i] |
                                                             (payload[2 * i + 1] << 8)));
        if (!std::isfinite(values[i])) {
          throw FormatError(fmt::format("non-finite value in dense tensor '{}'", name), idx,
                            r.offset() - len + 2 * i);
        }
      }
      out.push_back({std::move(name), DenseMatrix(rows, cols, std::move(values))});
      continue;
    }
    if (mode == static_cast<std::uint8_t>(CompressionMode::entropy)) {
      r.fail(fmt::format("tensor '{}' uses compression mode 1, which this build does not decode",
                         name));
    }
    if (mode != static_cast<std::uint8_t>(CompressionMode::none)) {
      r.fail(fmt::format("tensor '{}' has unknown compression mode {}", name, mode));
    }
    if (k == 0) r.fail(fmt::format("clustered tensor '{}' has K=0", name));

    std::vector<float> centroids(k);
    for (std::uint16_t j = 0; j < k; ++j) {
      centroids[j] = half_to_float(r.le<std::uint16_t>("centroids"));
      if (!std::isfinite(centroids[j])) {
        throw FormatError(fmt::format("non-finite centroid {} in tensor '{}'", j, name), idx,
                          r.offset() - 2);
      }
    }
    const auto len = r.le<std::uint64_t>("payload length");
    const std::uint64_t expected = packed_label_bytes(entries, k);
    if (len != expected) {
      r.fail(fmt::format("tensor '{}' label payload is {} bytes, expected {}", name, len,
                         expected));
    }
    const std::uint64_t payload_start = r.offset();
    const auto payload = r.take(len, "label payload");
    const unsigned bits = label_bits(k);
    std::vector<Label> labels(entries, 0);
    std::uint64_t bitpos = 0;
    for (std::uint64_t i = 0; i < entries && bits > 0; ++i) {
      unsigned v = 0;
      for (unsigned b = 0; b < bits; ++b, ++bitpos) {
        v |= static_cast<unsigned>((payload[bitpos >> 3] >> (bitpos & 7)) & 1u) << b;
      }
      if (v >= k) {
        throw FormatError(fmt::format("label {} at entry {} of tensor '{}' is out of range for K={}",
                                      v, i, name, k),
                          idx, payload_start + (i * bits) / 8);
      }
      labels[i] = static_cast<Label>(v);
    }
    out.push_back({std::move(name),
                   ClusteredMatrix(rows, cols, std::move(centroids), std::move(labels))});
  }
  if (!r.done()) r.fail("trailing bytes after the last record");
  return out;
}

std::vector<std::uint8_t> pack(std::span<const NamedClustered> tensors) {
  std::vector<WcxRecord> records;
  records.reserve(tensors.size());
  for (const auto& t : tensors) records.push_back({t.name, t.matrix});
  return write_container(records);
}

std::vector<NamedClustered> unpack(std::span<const std::uint8_t> bytes) {
  auto records = read_container(bytes);
  std::vector<NamedClustered> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto* cm = std::get_if<ClusteredMatrix>(&records[i].tensor);
    if (!cm) {
      throw FormatError(fmt::format("tensor '{}' is stored dense, not clustered", records[i].name),
                        static_cast<std::int64_t>(i), 0);
    }
    out.push_back({std::move(records[i].name), std::move(*cm)});
  }
  return out;
}

std::vector<StorageRow> storage_report(std::span<const NamedClustered> tensors) {
  std::vector<StorageRow> rows;
  rows.reserve(tensors.size());
  for (const auto& t : tensors) {
    StorageRow row;
    row.name = t.name;
    row.rows = t.matrix.rows();
    row.cols = t.matrix.cols();
    row.k = t.matrix.k();
    row.distinct_reduction = static_cast<double>(t.matrix.size()) / static_cast<double>(row.k);
    row.packed = record_size(t.name, t.matrix.size(), row.k);
    row.dense_fp16_bytes = 2 * static_cast<std::uint64_t>(t.matrix.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace rankclust
