#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rankclust/cluster_plan.hpp"
#include "rankclust/codec.hpp"
#include "rankclust/harness.hpp"

namespace rankclust {

enum class ReportFormat { csv, json };
ReportFormat parse_format(std::string_view text);

inline constexpr std::array<std::string_view, 13> kRecordColumns = {
    "model_id", "selector", "transform", "correction", "seed", "baseline_ppl", "ppl",
    "ppl_ratio", "rel_l2", "mu", "sigma2", "rank_distance", "ms"};

// Header line plus one line per record. Numbers use %.10g; NaN prints "nan".
std::string records_csv(std::span<const PerturbationRecord> records);
std::vector<PerturbationRecord> parse_records_csv(std::string_view text);

// {"suite", "columns", "records", "metadata", "reference_values"}; metadata
// and reference values are optional JSON text.
std::string records_json(std::string_view suite, std::span<const PerturbationRecord> records,
                         std::string_view metadata_json = "{}");
std::vector<PerturbationRecord> parse_records_json(std::string_view text);

// Published large-model numbers for a suite, as a JSON array (documentation
// only, never compared against).
std::string reference_values(std::string_view suite);

// One row per planned layer; transform "cluster:K=<k>", ppl_ratio against
// the unclustered model, rel_l2/mu/sigma2 of the clustering itself.
std::vector<PerturbationRecord> plan_records(const ToyModel& model, const ClusterPlan& plan);
std::string plan_json(const ToyModel& model, const ClusterPlan& plan);

std::string coverage_csv(std::span<const CoverageReport> reports);
std::string coverage_json(std::span<const CoverageReport> reports);

std::string bench_csv(std::span<const BenchRow> rows);
std::string bench_json(std::span<const BenchRow> rows, std::string_view metadata_json = "{}");

std::string storage_csv(std::span<const StorageRow> rows);
std::string storage_json(std::span<const StorageRow> rows);

// Writes to <dir>/<stem>.<csv|json>, creating dir. Returns the path.
std::filesystem::path write_report(const std::filesystem::path& dir, std::string_view stem, ReportFormat format,
                                   std::string_view text);

}  // namespace rankclust
