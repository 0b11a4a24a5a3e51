#include "dualcap/report.hpp"

#include <gtest/gtest.h>

namespace dualcap {
namespace {

TEST(ScaleReport, ReferenceRowScaling) {
  RawScores raw;
  raw.bleu1 = 0.1089;
  raw.cider = 0.0575;
  raw.rouge_l = 0.154;
  const ScoreReport r = scale_report(raw);
  EXPECT_EQ(r.columns[0].name, "Bleu 1");
  EXPECT_NEAR(*r.columns[0].scaled, 108.9, 1e-9);
  EXPECT_EQ(r.columns[5].name, "CIDEr");
  EXPECT_NEAR(*r.columns[5].scaled, 57.5, 1e-9);
  EXPECT_EQ(r.columns[4].name, "ROUGE_L");
  EXPECT_NEAR(*r.columns[4].scaled, 15.4, 1e-9);
  EXPECT_EQ(format_scaled(*r.columns[0].scaled), "108.9");
  EXPECT_EQ(format_scaled(*r.columns[5].scaled), "57.5");
  EXPECT_EQ(format_scaled(*r.columns[4].scaled), "15.4");
}

TEST(ScaleReport, FactorsAndColumnOrder) {
  const ScoreReport r = scale_report(RawScores{});
  const std::vector<std::pair<std::string, double>> expected{
      {"Bleu 1", 1e3}, {"Bleu 2", 1e3},  {"Bleu 3", 1e3},     {"METEOR", 1e3},
      {"ROUGE_L", 1e2}, {"CIDEr", 1e3}, {"BERT score", 1e2}, {"BLEURT", 1e1}};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(r.columns[i].name, expected[i].first);
    EXPECT_EQ(r.columns[i].factor, expected[i].second);
  }
  EXPECT_FALSE(r.columns[6].scaled.has_value());
  EXPECT_FALSE(r.columns[7].scaled.has_value());
}

TEST(ScaleReport, PluggedMetricIsScaled) {
  RawScores raw;
  raw.bert_score = 0.5;
  raw.bleurt = 0.25;
  const ScoreReport r = scale_report(raw);
  EXPECT_DOUBLE_EQ(*r.columns[6].scaled, 50.0);
  EXPECT_DOUBLE_EQ(*r.columns[7].scaled, 2.5);
}

TEST(FormatTable, MissingAndFailedCells) {
  RawScores raw;
  raw.bleu1 = 1.0;
  const std::string table = format_table({ReportRow{"MSMedCap (G, G+M)", scale_report(raw)}, ReportRow{"BLIP2 (G)", {}}});
  EXPECT_NE(table.find("Models"), std::string::npos);
  EXPECT_NE(table.find("1000.0"), std::string::npos);
  EXPECT_NE(table.find("n/a"), std::string::npos);
  EXPECT_NE(table.find("failed"), std::string::npos);
  EXPECT_NE(table.find("MSMedCap (G, G+M)"), std::string::npos);
}

}  // namespace
}  // namespace dualcap
