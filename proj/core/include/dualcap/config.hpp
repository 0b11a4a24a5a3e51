#pragma once

// Declarative run configuration. Every field has a default; a config file only
// needs the keys it changes, unknown keys are rejected, and the resolved form
// written next to each artifact lists every value explicitly.

#include "dualcap/encoders.hpp"
#include "dualcap/lm.hpp"
#include "dualcap/metrics.hpp"
#include "dualcap/optimizer.hpp"
#include "dualcap/qformer.hpp"
#include "dualcap/synthetic.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dualcap {

struct TokenizerOptions {
  int min_freq = 1;
  int max_tokens = 32;
};

/// Mix names: "G" (general only), "G+M" (general and medical, weighted by
/// manifest size) and "-" (branch disabled).
struct PretrainPlan {
  int epochs = 3;
  int batch_size = 8;
  OptimizerConfig optimizer{1e-3, 0.9, 0.999, 1e-8, 0.01};
  std::string clip_mix = "G";
  std::string sam_mix = "G+M";
};

struct FinetunePlan {
  int epochs = 3;
  int batch_size = 4;
  OptimizerConfig optimizer{5e-4, 0.9, 0.999, 1e-8, 0.01};
  std::map<std::string, double> mix{{"medical", 1.0}};
};

struct AblationConfig {
  std::vector<std::string> grid;  // empty selects the default seven rows
  std::vector<std::uint64_t> seeds{1, 2, 3};
};

struct RunConfig {
  std::string data_dir = "data";  // relative to the output root unless absolute
  SyntheticCorpusConfig corpus;
  TokenizerOptions tokenizer;
  EncoderSpec general_encoder = default_general_spec();
  EncoderSpec detail_encoder = default_detail_spec();
  QFormerConfig qformer;  // vocab, image_dims, lm_width and seed are filled in per branch
  LmConfig lm;            // vocab is filled in from the tokenizer
  LmPretrainConfig lm_pretrain;
  std::string prompt = "a picture of";
  PretrainPlan pretrain;
  FinetunePlan finetune;
  DecodeOptions decode;
  BleuMode bleu_mode = BleuMode::kCorpus;
  std::uint64_t seed = 1;
  AblationConfig ablation;
};

void validate(const RunConfig& cfg);

/// Parses a JSON document over the defaults; throws ConfigError on unknown keys or bad values.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);
/// Fully resolved JSON, pretty-printed with sorted keys.
std::string dump_config(const RunConfig& cfg);

std::filesystem::path data_path(const RunConfig& cfg, const std::filesystem::path& out_root);

}  // namespace dualcap
