#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rankclust/clustered_matrix.hpp"
#include "rankclust/tensor.hpp"

namespace rankclust {

DenseMatrix reconstruct(const ClusteredMatrix& cm);

// Mean and population variance of the reconstructed weights from centroids
// and counts alone. min/max range over the centroids that have members.
WeightStats reconstructed_stats(const ClusteredMatrix& cm);

// ||W_after - W_before||_F / ||W_before||_F for two matrices sharing labels,
// evaluated in O(K) from the counts.
double rel_l2_change(const ClusteredMatrix& before, const ClusteredMatrix& after);

// y[o] = sum_k c_k * (sum over d with L[d,o] = k of x[d]).
// Scatters x into per-(o, k) partial sums, then gathers against the centroids.
std::vector<float> lut_matvec(const ClusteredMatrix& cm, std::span<const float> x);

// Bits per label: ceil(log2 K), 0 when K == 1.
unsigned label_bits(std::size_t k) noexcept;
std::uint64_t packed_label_bytes(std::size_t entries, std::size_t k) noexcept;

// --- WCX container -------------------------------------------------------
//
// Little-endian layout:
//   "WCX1" | u16 version=1 | u32 tensor count |
//   per tensor: u16 name length | UTF-8 name | u32 D | u32 O | u16 K |
//               u8 mode | K x binary16 centroids | u64 label payload length |
//               payload
// Mode 0 packs labels row-major, LSB-first, ceil(log2 K) bits each.
// Mode 255 stores an unclustered tensor as D*O raw binary16 values (K = 0).
// Mode 1 is reserved for an entropy-coded label stream and is not produced.

inline constexpr char kWcxMagic[4] = {'W', 'C', 'X', '1'};
inline constexpr std::uint16_t kWcxVersion = 1;

enum class CompressionMode : std::uint8_t { none = 0, entropy = 1, dense_half = 255 };

struct NamedClustered {
  std::string name;
  ClusteredMatrix matrix;
};

struct WcxRecord {
  std::string name;
  std::variant<ClusteredMatrix, DenseMatrix> tensor;
};

std::vector<std::uint8_t> write_container(std::span<const WcxRecord> records);
std::vector<WcxRecord> read_container(std::span<const std::uint8_t> bytes);

// Clustered-only convenience wrappers.
std::vector<std::uint8_t> pack(std::span<const NamedClustered> tensors);
std::vector<NamedClustered> unpack(std::span<const std::uint8_t> bytes);

// Size of one mode-0 record in bytes, split by section.
struct RecordSize {
  std::uint64_t header = 0;     // name length .. mode, plus the payload length field
  std::uint64_t centroids = 0;  // 2 * K
  std::uint64_t labels = 0;     // packed label payload
  std::uint64_t total() const noexcept { return header + centroids + labels; }
};

RecordSize record_size(std::string_view name, std::size_t entries, std::size_t k) noexcept;

inline constexpr std::uint64_t kWcxFileHeaderBytes = 4 + 2 + 4;

struct StorageRow {
  std::string name;
  std::size_t rows = 0, cols = 0, k = 0;
  double distinct_reduction = 0.0;  // D*O / K
  RecordSize packed;
  std::uint64_t dense_fp16_bytes = 0;  // 2 * D * O
};

std::vector<StorageRow> storage_report(std::span<const NamedClustered> tensors);

}  // namespace rankclust
