#pragma once

// Two-stage orchestration: per-branch Q-Former pre-training on its own data
// mix, then prefix fine-tuning through the frozen language model, plus the
// ablation grid that repeats both stages per (cell, seed).

#include "dualcap/checkpoint.hpp"
#include "dualcap/config.hpp"
#include "dualcap/encoders.hpp"
#include "dualcap/lm.hpp"
#include "dualcap/manifest.hpp"
#include "dualcap/metrics.hpp"
#include "dualcap/optimizer.hpp"
#include "dualcap/qformer.hpp"
#include "dualcap/sampler.hpp"
#include "dualcap/tokenizer.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dualcap {

/// Encoder outputs and caption ids for every sample of one manifest, computed once.
struct EncodedDataset {
  Manifest manifest;
  std::vector<FeatureSeq> general;
  std::vector<FeatureSeq> detail;
  std::vector<std::vector<int>> captions;  // BOS...EOS framed
};

struct TrainingData {
  Tokenizer tokenizer;
  std::map<std::string, EncodedDataset> datasets;  // keyed "general", "medical"
  std::map<std::string, std::string> encoder_fingerprints;

  const EncodedDataset& dataset(const std::string& name) const;
  std::vector<int> prompt_ids(const std::string& prompt) const { return tokenizer.encode_words(prompt); }
};

/// Word vocabulary over the train-split captions of every manifest.
Tokenizer build_caption_tokenizer(const std::map<std::string, Manifest>& manifests, const TokenizerOptions& options);

TrainingData prepare_training_data(std::map<std::string, Manifest> manifests, Tokenizer tokenizer,
                                   const TokenizerOptions& options, const ImageEncoder& general,
                                   const ImageEncoder& detail);

/// Loads general.jsonl and medical.jsonl from a data directory.
std::map<std::string, Manifest> load_corpus_manifests(const std::filesystem::path& data_dir);

enum class Branch { kClip, kSam };

std::string_view branch_name(Branch b);

/// The two Q-Former branches; either may be absent for single-branch baselines.
struct CaptionModel {
  std::unique_ptr<QFormer> clip;
  std::unique_ptr<QFormer> sam;

  QFormer* branch(Branch b) const { return b == Branch::kClip ? clip.get() : sam.get(); }
  ParamList params() const;
  /// Soft queries, transformer blocks and output projections of the present branches.
  ParamList finetune_params() const;
};

QFormerConfig branch_qformer_config(const RunConfig& cfg, Branch b, int vocab, std::uint64_t seed);
CaptionModel make_caption_model(const RunConfig& cfg, int vocab, bool with_clip, bool with_sam, std::uint64_t seed);

struct StepLog {
  std::string stage;   // "pretrain" or "finetune"
  std::string branch;  // empty for finetune
  long long step = 0;
  int epoch = 0;
  std::map<std::string, double> losses;   // itc/itm/itg/total or lm/total
  std::map<std::string, int> batch_mix;   // samples per dataset in the batch
};

using LogSink = std::function<void(const StepLog&)>;
std::string to_json_line(const StepLog& log);

/// "G" -> general only; "G+M" -> general and medical weighted by train-split size.
MixSpec branch_mix(const std::string& mix, const TrainingData& data, std::uint64_t seed);
std::map<std::string, std::vector<std::size_t>> train_pools(const TrainingData& data);

/// Trains one branch on ITC + ITM + ITG; returns the mean total loss per epoch.
std::vector<double> pretrain_branch(QFormer& qformer, Branch branch, const MixSpec& mix, const PretrainPlan& plan,
                                    const TrainingData& data, std::uint64_t seed, const LogSink& log);

struct PretrainResult {
  CheckpointState checkpoint;
  std::map<std::string, std::vector<double>> epoch_losses;  // per branch
};

/// Pre-trains every present branch of `model` on the mixes in cfg.pretrain.
PretrainResult run_pretrain(const RunConfig& cfg, const TrainingData& data, CaptionModel& model, const LogSink& log);

/// Prefix [clip rows ; sam rows ; prompt] for one image from the present branches.
PrefixEmbedding caption_prefix(QFormerGraph* clip, QFormerGraph* sam, LmGraph& lm, const FeatureSeq& general,
                               const FeatureSeq& detail, std::span<const int> prompt);

/// Stage-2 optimisation of the prefix path against the frozen LM's caption loss.
class FinetuneSession {
 public:
  FinetuneSession(const RunConfig& cfg, const TrainingData& data, CaptionModel& model, FrozenLM& lm,
                  std::uint64_t seed);

  long long total_steps() const { return total_steps_; }
  long long steps_done() const { return optimizer_.steps(); }
  std::size_t epoch_batches() const { return sampler_.epoch_batches(); }
  bool finished() const { return steps_done() >= total_steps_; }

  /// One optimizer step on the next batch; returns the batch's mean caption loss.
  double step(const LogSink& log = {});
  /// Remaining steps; returns mean loss of each epoch finished during this call.
  std::vector<double> run(const LogSink& log = {});

  /// Trainable parameters, optimizer moments, sampler state and fingerprints.
  CheckpointState snapshot(const std::string& config_json) const;
  void restore(const CheckpointState& state);

 private:
  std::map<std::string, std::string> frozen_fingerprints() const;
  void check_frozen() const;

  const RunConfig* cfg_;
  const TrainingData* data_;
  CaptionModel* model_;
  FrozenLM* lm_;
  std::vector<int> prompt_;
  ParamList trainable_;
  AdamW optimizer_;
  BatchSampler sampler_;
  long long total_steps_ = 0;
  double epoch_sum_ = 0.0;
  std::map<std::string, std::string> frozen_at_start_;
};

struct Prediction {
  std::string image;
  std::string prediction;
};

std::vector<Prediction> generate_predictions(CaptionModel& model, FrozenLM& lm, const TrainingData& data,
                                             const std::string& dataset, Split split, const std::string& prompt,
                                             const DecodeOptions& options);
void save_predictions(const std::filesystem::path& path, const std::vector<Prediction>& predictions);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

/// References are every caption of the manifest sharing the prediction's image.
std::vector<EvalPair> pair_with_references(const std::vector<Prediction>& predictions, const Manifest& manifest);

/// Trains the caption-only language model on all train-split captions, then freezes it.
FrozenLM train_language_model(const RunConfig& cfg, const TrainingData& data);
LmConfig resolved_lm_config(const RunConfig& cfg, int vocab);

void save_language_model(const std::filesystem::path& dir, const FrozenLM& lm, const std::string& config_json);
FrozenLM load_language_model(const std::filesystem::path& dir, const RunConfig& cfg, int vocab);

/// Model parameters from a pretrain or finetune checkpoint; branches follow the tensors present.
CaptionModel load_caption_model(const CheckpointState& state, const RunConfig& cfg, int vocab);

// Ablation grid.

struct AblationCell {
  std::string name;
  std::string clip_mix;  // "G", "G+M" or "-"
  std::string sam_mix;
};

std::vector<AblationCell> default_ablation_grid();
/// Accepts the table naming with or without spaces, e.g. "MSMedCap(G,G+M)".
AblationCell parse_ablation_cell(const std::string& name);
/// Empty `names` selects the default grid; duplicates are a ConfigError.
std::vector<AblationCell> select_ablation_cells(const std::vector<std::string>& names);

struct SeedScores {
  std::uint64_t seed = 0;
  std::optional<RawScores> scores;
  std::string error;
};

struct CellResult {
  AblationCell cell;
  std::vector<SeedScores> seeds;
  std::optional<RawScores> median;  // empty when any seed failed
  std::string error;
};

std::vector<CellResult> run_ablation(const RunConfig& cfg, const TrainingData& data, FrozenLM& lm,
                                     const std::vector<AblationCell>& cells, const std::vector<std::uint64_t>& seeds,
                                     const std::filesystem::path& out_dir, const LogSink& log = {});

RawScores median_scores(const std::vector<RawScores>& runs);

}  // namespace dualcap
