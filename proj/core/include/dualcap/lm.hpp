#pragma once

// Small causal decoder standing in for the frozen captioning language model.
// It is pre-trained on captions alone, then frozen; afterwards only the soft
// prefix rows fed in front of the caption can be optimised.

#include "dualcap/autograd.hpp"
#include "dualcap/layers.hpp"
#include "dualcap/tokenizer.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dualcap {

struct LmConfig {
  int vocab = 0;
  int width = 64;
  int layers = 2;
  int heads = 4;
  int ffn_mult = 4;
  int max_context = 64;
  std::uint64_t seed = 5;
};

void validate(const LmConfig& cfg);

struct DecoderBlock {
  LayerNorm attn_norm;
  AttentionWeights attn;
  LayerNorm ffn_norm;
  Linear ffn_in;
  Linear ffn_out;

  void visit(const ParamVisitor& fn);
};

class FrozenLM {
 public:
  explicit FrozenLM(const LmConfig& cfg);

  const LmConfig& config() const { return cfg_; }
  void visit(const ParamVisitor& fn);
  void visit(const ConstParamVisitor& fn) const;
  ParamList params();

  /// Marks every parameter frozen; optimizers skip frozen parameters.
  void freeze();
  bool frozen() const { return frozen_; }
  std::string fingerprint() const;

  Parameter token_embed;
  std::vector<DecoderBlock> blocks;
  LayerNorm final_norm;
  Linear head;
  Matrix positions;

 private:
  LmConfig cfg_;
  bool frozen_ = false;
};

/// LM parameters bound into a graph; frozen parameters bind as constants.
class LmGraph {
 public:
  explicit LmGraph(FrozenLM& lm);

  FrozenLM& model() { return *lm_; }

  struct Block {
    BoundLayerNorm attn_norm;
    BoundAttention attn;
    BoundLayerNorm ffn_norm;
    BoundLinear ffn_in;
    BoundLinear ffn_out;
  };

  ag::Var token_embed;
  std::vector<Block> blocks;
  BoundLayerNorm final_norm;
  BoundLinear head;

 private:
  FrozenLM* lm_;
};

/// e = [clip query rows ; sam query rows ; embedded prompt]; row counts are kept for checks.
struct PrefixEmbedding {
  ag::Var rows;
  int clip_rows = 0;
  int sam_rows = 0;
  int prompt_rows = 0;

  int size() const { return clip_rows + sam_rows + prompt_rows; }
};

/// Either projection may be undefined or have zero rows (single-branch ablations).
PrefixEmbedding build_prefix(LmGraph& lm, const ag::Var& clip_proj, const ag::Var& sam_proj,
                             std::span<const int> prompt);

/// Next-token logits at every caption position (T x V), conditioned causally on the prefix.
ag::Var lm_logits(LmGraph& lm, const PrefixEmbedding& prefix, std::span<const int> caption_ids);

/// Mean next-token cross-entropy over a BOS...EOS caption.
ag::Var lm_loss(LmGraph& lm, const PrefixEmbedding& prefix, std::span<const int> caption_ids);

struct DecodeOptions {
  enum class Strategy { kGreedy, kBeam };
  Strategy strategy = Strategy::kBeam;
  int beam_size = 3;
  double length_alpha = 0.7;
  int max_len = 32;  // generated tokens, EOS included
};

/// Generated ids after BOS, without the terminating EOS.
std::vector<int> generate_ids(LmGraph& lm, const PrefixEmbedding& prefix, const DecodeOptions& options);
std::string generate(LmGraph& lm, const PrefixEmbedding& prefix, const DecodeOptions& options,
                     const Tokenizer& tokenizer);

/// Sum of next-token log-probabilities of BOS + ids + EOS given the prefix.
double sequence_log_prob(LmGraph& lm, const PrefixEmbedding& prefix, std::span<const int> ids,
                         bool include_eos = true);

struct LmPretrainConfig {
  int steps = 600;
  int batch_size = 16;
  double lr = 3e-3;
  double weight_decay = 0.01;
  double word_prefix_rate = 0.5;  // share of captions preceded by their own shuffled words
  int word_prefix_rows = 16;
  std::uint64_t seed = 5;
};

/// Trains on prompt-prefixed captions for a fixed step budget, then freezes. A
/// share of captions also get a soft prefix of their own embedded words in
/// shuffled order, so the frozen model reads content from prefix rows.
FrozenLM pretrain_toy_lm(std::span<const std::vector<int>> captions, std::span<const int> prompt,
                         const LmConfig& cfg, const LmPretrainConfig& train);

/// exp(mean next-token NLL) over BOS...EOS captions with the prompt as prefix.
double perplexity(FrozenLM& lm, std::span<const std::vector<int>> captions, std::span<const int> prompt);

}  // namespace dualcap
