#pragma once

// Command-level stages over an output root. Each stage reads its prerequisites
// from the root, writes its artifacts there and leaves a resolved-config
// snapshot under config/<stage>.json.
//
//   data/                  corpus (unless cfg.data_dir is absolute)
//   tokenizer.json
//   lm/  pretrain/  finetune/   checkpoints
//   logs/<stage>.jsonl
//   predictions.jsonl  report.json  report.txt
//   ablation/ablation.json  ablation/ablation.txt  ablation/<cell>/seed-N/predictions.jsonl

#include "dualcap/config.hpp"
#include "dualcap/report.hpp"
#include "dualcap/training.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dualcap {

struct RunLayout {
  std::filesystem::path root;
  std::filesystem::path data;

  std::filesystem::path tokenizer() const { return root / "tokenizer.json"; }
  std::filesystem::path lm() const { return root / "lm"; }
  std::filesystem::path pretrain() const { return root / "pretrain"; }
  std::filesystem::path finetune() const { return root / "finetune"; }
  std::filesystem::path predictions() const { return root / "predictions.jsonl"; }
  std::filesystem::path report_json() const { return root / "report.json"; }
  std::filesystem::path report_txt() const { return root / "report.txt"; }
  std::filesystem::path ablation_dir() const { return root / "ablation"; }
  std::filesystem::path log(std::string_view stage) const;
  std::filesystem::path config_snapshot(std::string_view stage) const;
};

RunLayout run_layout(const RunConfig& cfg, const std::filesystem::path& root);
void write_config_snapshot(const RunLayout& layout, std::string_view stage, const RunConfig& cfg);

/// Manifests from the data dir, tokenizer from the root, encoded with the configured encoders.
TrainingData load_run_data(const RunConfig& cfg, const RunLayout& layout);

struct GenDataSummary {
  std::map<std::string, std::size_t> counts;  // "general/train" etc.
};
GenDataSummary stage_gen_data(const RunConfig& cfg, const RunLayout& layout);

struct PretrainSummary {
  double lm_perplexity = 0.0;  // medical test captions behind the prompt
  std::map<std::string, std::vector<double>> epoch_losses;
};
/// Builds the tokenizer, trains and freezes the LM, then pre-trains both branches.
PretrainSummary stage_pretrain(const RunConfig& cfg, const RunLayout& layout);

struct FinetuneSummary {
  std::vector<double> epoch_losses;
  long long steps = 0;
  long long resumed_from = 0;
};
/// Saves a checkpoint at every epoch end; `resume` continues from an existing finetune checkpoint.
FinetuneSummary stage_finetune(const RunConfig& cfg, const RunLayout& layout, bool resume);

std::vector<Prediction> stage_generate(const RunConfig& cfg, const RunLayout& layout, const std::string& dataset,
                                       Split split, const std::filesystem::path& out);

struct EvaluateSummary {
  RawScores raw;
  std::size_t pairs = 0;
  std::string table;
};
EvaluateSummary stage_evaluate(const RunConfig& cfg, const RunLayout& layout,
                               const std::filesystem::path& predictions, const std::string& dataset);

struct AblateSummary {
  std::vector<CellResult> cells;
  std::string table;
};
/// Trains a fresh LM unless lm/ already exists under the root.
AblateSummary stage_ablate(const RunConfig& cfg, const RunLayout& layout, const std::vector<AblationCell>& cells,
                           const std::vector<std::uint64_t>& seeds);

/// Re-renders the tables from report.json and ablation/ablation.json, whichever exist.
std::string stage_report(const RunLayout& layout);

std::string evaluation_json(const RawScores& raw, const std::string& dataset, std::size_t pairs, BleuMode mode);
std::string ablation_json(const std::vector<CellResult>& cells, const std::vector<std::uint64_t>& seeds);
std::vector<ReportRow> ablation_rows(const std::vector<CellResult>& cells);

}  // namespace dualcap
