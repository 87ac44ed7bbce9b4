#include "rankclust/report.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>
#include <json.hpp>

#include "rankclust/corpus.hpp"
#include "rankclust/error.hpp"

namespace rankclust {

using json = nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{:.10g}", v);
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw DataError("unterminated quote in CSV");
  out.push_back(std::move(cur));
  return out;
}

double parse_double(const std::string& s) {
  if (s == "nan") return kNaN;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw DataError(fmt::format("bad number '{}'", s));
    return v;
  } catch (const std::logic_error&) {
    throw DataError(fmt::format("bad number '{}'", s));
  }
}

json jnum(double v) { return std::isnan(v) ? json(nullptr) : json(v); }
double from_jnum(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

json record_json(const PerturbationRecord& r) {
  return {{"model_id", r.model_id},   {"selector", r.selector},           {"transform", r.transform},
          {"correction", r.correction}, {"seed", r.seed},                 {"baseline_ppl", jnum(r.baseline_ppl)},
          {"ppl", jnum(r.ppl)},         {"ppl_ratio", jnum(r.ppl_ratio)}, {"rel_l2", jnum(r.rel_l2)},
          {"mu", jnum(r.mu)},           {"sigma2", jnum(r.sigma2)},       {"rank_distance", jnum(r.rank_distance)},
          {"ms", jnum(r.ms)}};
}

json parse_or_throw(std::string_view text, std::string_view what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(fmt::format("bad {} JSON: {}", what, e.what()));
  }
}

}  // namespace

ReportFormat parse_format(std::string_view text) {
  if (text == "csv") return ReportFormat::csv;
  if (text == "json") return ReportFormat::json;
  throw InvalidInput(fmt::format("unknown report format '{}'", text));
}

std::string records_csv(std::span<const PerturbationRecord> records) {
  std::string out;
  for (std::size_t i = 0; i < kRecordColumns.size(); ++i) {
    if (i) out += ',';
    out += kRecordColumns[i];
  }
  out += '\n';
  for (const auto& r : records) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", csv_field(r.model_id), csv_field(r.selector),
                       csv_field(r.transform), csv_field(r.correction), r.seed, num(r.baseline_ppl), num(r.ppl),
                       num(r.ppl_ratio), num(r.rel_l2), num(r.mu), num(r.sigma2), num(r.rank_distance), num(r.ms));
  }
  return out;
}

std::vector<PerturbationRecord> parse_records_csv(std::string_view text) {
  std::vector<PerturbationRecord> out;
  bool header = true;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view() : text.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != kRecordColumns.size()) {
      throw DataError(fmt::format("CSV row has {} fields, expected {}", f.size(), kRecordColumns.size()));
    }
    if (header) {
      for (std::size_t i = 0; i < f.size(); ++i) {
        if (f[i] != kRecordColumns[i]) throw DataError(fmt::format("unexpected CSV column '{}'", f[i]));
      }
      header = false;
      continue;
    }
    PerturbationRecord r;
    r.model_id = f[0];
    r.selector = f[1];
    r.transform = f[2];
    r.correction = f[3];
    try {
      r.seed = std::stoull(f[4]);
    } catch (const std::logic_error&) {
      throw DataError(fmt::format("bad seed '{}'", f[4]));
    }
    r.baseline_ppl = parse_double(f[5]);
    r.ppl = parse_double(f[6]);
    r.ppl_ratio = parse_double(f[7]);
    r.rel_l2 = parse_double(f[8]);
    r.mu = parse_double(f[9]);
    r.sigma2 = parse_double(f[10]);
    r.rank_distance = parse_double(f[11]);
    r.ms = parse_double(f[12]);
    out.push_back(std::move(r));
  }
  if (header) throw DataError("CSV has no header");
  return out;
}

std::string records_json(std::string_view suite, std::span<const PerturbationRecord> records,
                         std::string_view metadata_json) {
  json doc;
  doc["suite"] = suite;
  doc["columns"] = json::array();
  for (auto c : kRecordColumns) doc["columns"].push_back(c);
  doc["records"] = json::array();
  for (const auto& r : records) doc["records"].push_back(record_json(r));
  doc["metadata"] = parse_or_throw(metadata_json, "metadata");
  doc["reference_values"] = json::parse(reference_values(suite));
  return doc.dump(2) + "\n";
}

std::vector<PerturbationRecord> parse_records_json(std::string_view text) {
  const json doc = parse_or_throw(text, "report");
  std::vector<PerturbationRecord> out;
  try {
    for (const auto& j : doc.at("records")) {
      PerturbationRecord r;
      r.model_id = j.at("model_id").get<std::string>();
      r.selector = j.at("selector").get<std::string>();
      r.transform = j.at("transform").get<std::string>();
      r.correction = j.at("correction").get<std::string>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.baseline_ppl = from_jnum(j.at("baseline_ppl"));
      r.ppl = from_jnum(j.at("ppl"));
      r.ppl_ratio = from_jnum(j.at("ppl_ratio"));
      r.rel_l2 = from_jnum(j.at("rel_l2"));
      r.mu = from_jnum(j.at("mu"));
      r.sigma2 = from_jnum(j.at("sigma2"));
      r.rank_distance = from_jnum(j.at("rank_distance"));
      r.ms = from_jnum(j.at("ms"));
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw DataError(fmt::format("bad report record: {}", e.what()));
  }
  return out;
}

std::string reference_values(std::string_view suite) {
  // Llama-3.1-8B-Instruct unless noted; single-layer rows use layer 10 gate_proj at K=32.
  json refs = json::array();
  auto row = [&](std::string label, double ppl, std::string model = "Llama-3.1-8B-Instruct") {
    refs.push_back({{"model", model}, {"condition", label}, {"ppl", ppl}});
  };
  if (suite == "perturb") {
    row("baseline", 9.08);
    row("sorted_gaussian", 9.17);
    row("freq_weighted_monotone", 9.17);
    row("sign_scramble_shift", 9.13);
    row("sign_preserving_shuffle", 9.56);
    row("gaussian_random", 9.76);
    row("random_permutation", 20.67);
    row("random_permutation", 460.2, "CAI Llama 3B");
    row("random_permutation", 3151, "SmolLM2-135M");
  } else if (suite == "sweep") {
    row("identity", 9.08);
    row("affine:a=0.5", 9.18);
    row("affine:a=2", 9.59);
    row("tanh_scale:alpha=1", 9.08);
    row("tanh_scale:alpha=2", 9.59);
    row("tanh_scale:alpha=3", 11.33);
    row("power:gamma=1.5", 9.37);
    row("power:gamma=0.5", 1159.52);
  } else if (suite == "depth") {
    const char* conds[] = {"sign_preserving_shuffle", "sign_scramble_shift", "gaussian_random", "sorted_gaussian"};
    const std::pair<const char*, std::array<double, 4>> rows[] = {
        {"layers.1.mlp.gate_proj", {9.64, 117.39, 2260, 11.30}},
        {"layers.10.mlp.gate_proj", {9.56, 9.13, 9.76, 9.17}},
        {"layers.30.mlp.gate_proj", {13.18, 9.08, 47.30, 10.00}},
        {"layers.10.self_attn.q_proj", {10.17, 9.08, 9.83, 9.48}}};
    for (const auto& [sel, vals] : rows) {
      for (std::size_t i = 0; i < 4; ++i) {
        refs.push_back({{"model", "Llama-3.1-8B-Instruct"}, {"selector", sel}, {"condition", conds[i]}, {"ppl", vals[i]}});
      }
    }
  } else if (suite == "progressive") {
    refs.push_back({{"model", "8B scale"}, {"condition", "sorted_gaussian uncorrected"},
                    {"note", "ratio above 1e5 after the first replaced blocks"}});
  } else if (suite == "bench") {
    refs.push_back({{"path", "dense"}, {"ratio", 1.00}});
    refs.push_back({{"path", "rebuild"}, {"ratio", 1.02}});
    refs.push_back({{"path", "lut"}, {"ratio", 4.52}});
  } else if (suite == "coverage") {
    refs.push_back({{"k", 32}, {"clusters_for_90pct", 19}});
  } else if (suite == "cluster") {
    refs.push_back({{"budget", 0.5}, {"modal_k", 32}});
  }
  return refs.dump();
}

std::vector<PerturbationRecord> plan_records(const ToyModel& model, const ClusterPlan& plan) {
  const std::string id = model_id(model);
  std::vector<PerturbationRecord> out;
  for (const auto& e : plan.entries) {
    const auto& cm = plan.clustered.at(tensor_name(e.selector));
    const DenseMatrix& w = model.projection(e.selector);
    const DenseMatrix rec = reconstruct(cm);
    double diff2 = 0.0, base2 = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double d = static_cast<double>(rec.values()[i]) - w.values()[i];
      diff2 += d * d;
      base2 += static_cast<double>(w.values()[i]) * w.values()[i];
    }
    const WeightStats st = reconstructed_stats(cm);
    out.push_back({id, e.selector.to_string(), fmt::format("cluster:K={}", e.choice.k),
                   e.choice.forced ? "forced" : "none", 0, plan.baseline_ppl, e.choice.ppl,
                   e.choice.ppl / plan.baseline_ppl, base2 > 0.0 ? std::sqrt(diff2 / base2) : kNaN, st.mean, st.variance,
                   0.0, 0.0});
  }
  out.push_back({id, "all", "cluster:plan", "none", 0, plan.baseline_ppl, plan.clustered_ppl,
                 plan.clustered_ppl / plan.baseline_ppl, kNaN, kNaN, kNaN, 0.0, 0.0});
  return out;
}

std::string plan_json(const ToyModel& model, const ClusterPlan& plan) {
  json meta;
  meta["budget"] = plan.budget;
  meta["candidates"] = plan.candidates;
  meta["baseline_ppl"] = plan.baseline_ppl;
  meta["clustered_ppl"] = plan.clustered_ppl;
  meta["delta_ppl"] = plan.clustered_ppl - plan.baseline_ppl;
  meta["valid"] = plan.valid();
  json hist = json::object();
  for (const auto& [k, n] : plan.k_histogram()) hist[std::to_string(k)] = n;
  meta["k_histogram"] = hist;
  return records_json("cluster", plan_records(model, plan), meta.dump());
}

std::string coverage_csv(std::span<const CoverageReport> reports) {
  std::string out = "name,k,clusters_for_target,target_share,skewness,excess_kurtosis,rank,count,cumulative_share\n";
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < r.counts_desc.size(); ++i) {
      out += fmt::format("{},{},{},{},{},{},{},{},{}\n", csv_field(r.name), r.k, r.clusters_for_target,
                         num(r.target_share), num(r.skewness), num(r.excess_kurtosis), i + 1, r.counts_desc[i],
                         num(r.cumulative_share[i]));
    }
  }
  return out;
}

std::string coverage_json(std::span<const CoverageReport> reports) {
  json doc;
  doc["suite"] = "coverage";
  doc["reports"] = json::array();
  for (const auto& r : reports) {
    doc["reports"].push_back({{"name", r.name},
                              {"k", r.k},
                              {"counts_desc", r.counts_desc},
                              {"cumulative_share", r.cumulative_share},
                              {"target_share", r.target_share},
                              {"clusters_for_target", r.clusters_for_target},
                              {"skewness", jnum(r.skewness)},
                              {"excess_kurtosis", jnum(r.excess_kurtosis)}});
  }
  doc["reference_values"] = json::parse(reference_values("coverage"));
  return doc.dump(2) + "\n";
}

std::string bench_csv(std::span<const BenchRow> rows) {
  std::string out = "path,reps,mean_ms,ratio,setup_ms\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{}\n", r.path, r.reps, num(r.mean_ms), num(r.ratio), num(r.setup_ms));
  }
  return out;
}

std::string bench_json(std::span<const BenchRow> rows, std::string_view metadata_json) {
  json doc;
  doc["suite"] = "bench";
  doc["rows"] = json::array();
  for (const auto& r : rows) {
    doc["rows"].push_back({{"path", r.path}, {"reps", r.reps}, {"mean_ms", r.mean_ms}, {"ratio", r.ratio},
                           {"setup_ms", r.setup_ms}});
  }
  doc["metadata"] = parse_or_throw(metadata_json, "metadata");
  doc["reference_values"] = json::parse(reference_values("bench"));
  return doc.dump(2) + "\n";
}

std::string storage_csv(std::span<const StorageRow> rows) {
  std::string out = "name,rows,cols,k,distinct_reduction,header_bytes,centroid_bytes,label_bytes,packed_bytes,dense_fp16_bytes\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", csv_field(r.name), r.rows, r.cols, r.k,
                       num(r.distinct_reduction), r.packed.header, r.packed.centroids, r.packed.labels,
                       r.packed.total(), r.dense_fp16_bytes);
  }
  return out;
}

std::string storage_json(std::span<const StorageRow> rows) {
  json doc;
  doc["tensors"] = json::array();
  for (const auto& r : rows) {
    doc["tensors"].push_back({{"name", r.name},
                              {"rows", r.rows},
                              {"cols", r.cols},
                              {"k", r.k},
                              {"distinct_reduction", r.distinct_reduction},
                              {"header_bytes", r.packed.header},
                              {"centroid_bytes", r.packed.centroids},
                              {"label_bytes", r.packed.labels},
                              {"packed_bytes", r.packed.total()},
                              {"dense_fp16_bytes", r.dense_fp16_bytes}});
  }
  return doc.dump(2) + "\n";
}

std::filesystem::path write_report(const std::filesystem::path& dir, std::string_view stem, ReportFormat format,
                                   std::string_view text) {
  const auto path = dir / fmt::format("{}.{}", stem, format == ReportFormat::csv ? "csv" : "json");
  write_text(path, text);
  return path;
}

}  // namespace rankclust
