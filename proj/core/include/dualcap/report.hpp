#pragma once

#include "dualcap/metrics.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dualcap {

/// One scaled column of the results table.
struct ScaledMetric {
  std::string_view name;
  double factor = 1.0;
  std::optional<double> raw;
  std::optional<double> scaled;
};

/// Column order and factors of the results table: BLEU, METEOR and CIDEr x1e3,
/// ROUGE_L x1e2, BERT score x1e2, BLEURT x1e1.
struct ScoreReport {
  std::array<ScaledMetric, 8> columns;
};

ScoreReport scale_report(const RawScores& raw);

struct ReportRow {
  std::string model;
  std::optional<ScoreReport> scores;  // empty marks a failed cell
};

/// Aligned plain-text table; missing values print as "n/a", failed rows as "failed".
std::string format_table(const std::vector<ReportRow>& rows);
/// One decimal place.
std::string format_scaled(double value);

}  // namespace dualcap
