#include "dualcap/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace dualcap {

ScoreReport scale_report(const RawScores& raw) {
  ScoreReport r{{{
      {"Bleu 1", 1e3, raw.bleu1, {}},
      {"Bleu 2", 1e3, raw.bleu2, {}},
      {"Bleu 3", 1e3, raw.bleu3, {}},
      {"METEOR", 1e3, raw.meteor, {}},
      {"ROUGE_L", 1e2, raw.rouge_l, {}},
      {"CIDEr", 1e3, raw.cider, {}},
      {"BERT score", 1e2, raw.bert_score, {}},
      {"BLEURT", 1e1, raw.bleurt, {}},
  }}};
  for (auto& c : r.columns)
    if (c.raw) c.scaled = *c.raw * c.factor;
  return r;
}

std::string format_scaled(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", value);
  return buf;
}

std::string format_table(const std::vector<ReportRow>& rows) {
  static constexpr std::array<std::string_view, 8> kScaleLabels{
      "(x10^3)", "(x10^3)", "(x10^3)", "(x10^3)", "(x10^2)", "(x10^3)", "(x10^2)", "(x10^1)"};
  const ScoreReport header = scale_report(RawScores{});
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> names{"Models"};
  std::vector<std::string> scales{""};
  for (std::size_t i = 0; i < header.columns.size(); ++i) {
    names.emplace_back(header.columns[i].name);
    scales.emplace_back(kScaleLabels[i]);
  }
  cells.push_back(names);
  cells.push_back(scales);
  for (const auto& row : rows) {
    std::vector<std::string> line{row.model};
    for (std::size_t i = 0; i < header.columns.size(); ++i) {
      if (!row.scores) {
        line.emplace_back("failed");
      } else {
        const auto& c = row.scores->columns[i];
        line.push_back(c.scaled ? format_scaled(*c.scaled) : "n/a");
      }
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(names.size(), 0);
  for (const auto& line : cells)
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  std::size_t row_width = width[0];
  for (std::size_t i = 1; i < width.size(); ++i) row_width += 3 + width[i];
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t i = 0; i < cells[r].size(); ++i) {
      const std::string& s = cells[r][i];
      if (i == 0) {
        out += s + std::string(width[i] - s.size(), ' ');
      } else {
        out += " | " + std::string(width[i] - s.size(), ' ') + s;
      }
    }
    out += '\n';
    if (r == 1) out += std::string(row_width, '-') + '\n';
  }
  return out;
}

}  // namespace dualcap
