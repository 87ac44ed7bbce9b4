#include <cmath>
#include <limits>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "rankclust/error.hpp"
#include "rankclust/report.hpp"

using namespace rankclust;

namespace {

std::vector<PerturbationRecord> sample() {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {
      {"00ff00ff00ff00ff", "layers.4.mlp.gate_proj", "affine:a=0.5,b=0.01", "none", 0, 5.8, 5.9, 5.9 / 5.8, 0.5,
       0.01, 0.002, 0.0, 12.5},
      {"00ff00ff00ff00ff", "layers.4.mlp.gate_proj", "sorted_gaussian", "moments", 3, 5.8, 6.1, 6.1 / 5.8,
       0.123456789012, -1e-5, 3e-4, 0.0, 1.0},
      {"00ff00ff00ff00ff", "layers.4.mlp.gate_proj", "power:gamma=1e+06", "error", 0, 5.8, nan, nan, nan, nan, nan,
       nan, 0.0},
  };
}

bool same(const PerturbationRecord& a, const PerturbationRecord& b) {
  auto eq = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || std::abs(x - y) <= 1e-9 * std::abs(x); };
  return a.model_id == b.model_id && a.selector == b.selector && a.transform == b.transform &&
         a.correction == b.correction && a.seed == b.seed && eq(a.baseline_ppl, b.baseline_ppl) && eq(a.ppl, b.ppl) &&
         eq(a.ppl_ratio, b.ppl_ratio) && eq(a.rel_l2, b.rel_l2) && eq(a.mu, b.mu) && eq(a.sigma2, b.sigma2) &&
         eq(a.rank_distance, b.rank_distance) && eq(a.ms, b.ms);
}

}  // namespace

TEST(Report, HeaderOnlyCsv) {
  EXPECT_EQ(records_csv({}),
            "model_id,selector,transform,correction,seed,baseline_ppl,ppl,ppl_ratio,rel_l2,mu,sigma2,rank_distance,ms\n");
  EXPECT_TRUE(parse_records_csv(records_csv({})).empty());
}

TEST(Report, CsvRoundTrip) {
  const auto rows = sample();
  const auto text = records_csv(rows);
  const auto back = parse_records_csv(text);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_TRUE(same(rows[i], back[i])) << i;
  EXPECT_NE(text.find("nan"), std::string::npos);
}

TEST(Report, CsvQuotesCommas) {
  // Transform text contains commas; every line still parses to 13 fields.
  const auto text = records_csv(sample());
  std::size_t lines = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto end = text.find('\n', start);
    const std::string line = text.substr(start, end - start);
    int fields = 1;
    bool quoted = false;
    for (char ch : line) {
      if (ch == '"') quoted = !quoted;
      if (ch == ',' && !quoted) ++fields;
    }
    EXPECT_EQ(fields, 13) << line;
    ++lines;
    start = end + 1;
  }
  EXPECT_EQ(lines, 4u);
  EXPECT_THROW(parse_records_csv("model_id,selector\nx,y\n"), DataError);
}

TEST(Report, JsonRoundTrip) {
  const auto rows = sample();
  const auto text = records_json("perturb", rows, R"({"k":32})");
  const auto doc = nlohmann::json::parse(text);
  EXPECT_EQ(doc["suite"], "perturb");
  EXPECT_EQ(doc["columns"].size(), 13u);
  EXPECT_EQ(doc["metadata"]["k"], 32);
  EXPECT_TRUE(doc["records"][2]["ppl"].is_null());
  EXPECT_TRUE(doc.contains("reference_values"));
  const auto back = parse_records_json(text);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_TRUE(same(rows[i], back[i])) << i;
}

TEST(Report, ReferenceValuesAreJson) {
  for (const char* suite : {"perturb", "sweep", "depth", "progressive", "bench", "coverage", "cluster"}) {
    EXPECT_TRUE(nlohmann::json::accept(reference_values(suite))) << suite;
  }
}

TEST(Report, Format) {
  EXPECT_EQ(parse_format("csv"), ReportFormat::csv);
  EXPECT_EQ(parse_format("json"), ReportFormat::json);
  EXPECT_THROW(parse_format("xml"), InvalidInput);
}

TEST(Report, WriteReport) {
  const auto path = write_report(std::filesystem::path(RANKCLUST_TEST_TMP) / "report", "x", ReportFormat::csv,
                                 records_csv({}));
  EXPECT_EQ(path.filename(), "x.csv");
  EXPECT_TRUE(std::filesystem::exists(path));
}
