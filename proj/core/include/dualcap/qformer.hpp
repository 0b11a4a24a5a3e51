#pragma once

// Query transformer for one image branch: learnable soft queries and caption
// tokens share masked self-attention; only query rows cross-attend to the
// frozen image features. Also hosts the three pre-training objectives and the
// output projection into the language model's embedding width.

#include "dualcap/autograd.hpp"
#include "dualcap/encoders.hpp"
#include "dualcap/layers.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dualcap {

enum class MaskMode { kItc, kItm, kItg, kCaption };

std::string_view to_string(MaskMode mode);

/// Self-attention mask over [query rows 0..M-1, text rows M..M+T-1].
struct AttentionMask {
  MaskMode mode = MaskMode::kCaption;
  int queries = 0;
  int text = 0;
  ag::BoolMatrix allowed;  // allowed(i, j): row i may attend to row j
};

AttentionMask build_attention_mask(MaskMode mode, int queries, int text);

struct QFormerConfig {
  int queries = 8;
  int hidden = 64;
  int layers = 2;
  int heads = 4;
  int ffn_mult = 4;
  int itc_dim = 32;
  double temperature_init = 0.07;
  int max_text = 32;
  int vocab = 0;       // from the tokenizer
  int image_dims = 0;  // C or S of the branch encoder
  int lm_width = 64;
  std::uint64_t seed = 0;
};

void validate(const QFormerConfig& cfg);

struct QFormerBlock {
  AttentionWeights self_attn;
  LayerNorm self_norm;
  AttentionWeights cross_attn;
  LayerNorm cross_norm;
  Linear ffn_in;
  Linear ffn_out;
  LayerNorm ffn_norm;

  void visit(const ParamVisitor& fn);
};

/// Parameters of one branch. Names are "<branch>.<group>..." where group is one of
/// queries, text_embed, blocks, heads, proj.
class QFormer {
 public:
  QFormer(std::string branch, const QFormerConfig& cfg);

  const std::string& branch() const { return branch_; }
  const QFormerConfig& config() const { return cfg_; }

  void visit(const ParamVisitor& fn);
  ParamList params();
  /// Parameters whose group (second name component) is in `groups`.
  ParamList params_in(std::span<const std::string_view> groups);
  /// Keeps the contrastive temperature in [0.001, 0.5].
  void clamp_temperature();

  Parameter queries;
  Parameter text_embed;
  std::vector<QFormerBlock> blocks;
  Linear itc_query;
  Linear itc_text;
  Parameter temperature;
  Linear itm_head;
  Linear itg_head;
  Linear proj;
  Matrix text_positions;

 private:
  std::string branch_;
  QFormerConfig cfg_;
};

/// Parameter-name group helper: "clip.blocks.0.self.q.w" -> "blocks".
std::string_view param_group(std::string_view name);

/// All parameters of a QFormer bound into one autograd graph.
class QFormerGraph {
 public:
  explicit QFormerGraph(QFormer& model);

  QFormer& model() { return *model_; }

  struct Block {
    BoundAttention self_attn;
    BoundLayerNorm self_norm;
    BoundAttention cross_attn;
    BoundLayerNorm cross_norm;
    BoundLinear ffn_in;
    BoundLinear ffn_out;
    BoundLayerNorm ffn_norm;
  };

  ag::Var queries;
  ag::Var text_embed;
  std::vector<Block> blocks;
  BoundLinear itc_query;
  BoundLinear itc_text;
  ag::Var temperature;
  BoundLinear itm_head;
  BoundLinear itg_head;
  BoundLinear proj;

 private:
  QFormer* model_;
};

struct QFormerOutput {
  ag::Var query_states;  // M x D
  ag::Var text_states;   // T x D, zero rows in caption mode
};

/// Runs every block: masked self-attention over [queries; text], cross-attention on
/// query rows only, then feed-forward; post-norm residuals throughout.
QFormerOutput qformer_forward(QFormerGraph& graph, const FeatureSeq& image, std::span<const int> text_ids,
                              MaskMode mode);

/// One (image features, caption ids) training pair. Caption ids are BOS...EOS framed.
struct PairRef {
  const FeatureSeq* image = nullptr;
  const std::vector<int>* caption = nullptr;
};

/// Symmetric InfoNCE over a B x B similarity matrix divided by the temperature.
ag::Var contrastive_loss(const ag::Var& similarity, const ag::Var& temperature);

ag::Var itc_loss(QFormerGraph& graph, std::span<const PairRef> batch);
/// `rng` picks one in-batch negative caption per image.
ag::Var itm_loss(QFormerGraph& graph, std::span<const PairRef> batch, Rng& rng);
ag::Var itg_loss(QFormerGraph& graph, std::span<const PairRef> batch);

/// Affine map of query states to the language-model width.
ag::Var project_queries(QFormerGraph& graph, const ag::Var& query_states);

}  // namespace dualcap
