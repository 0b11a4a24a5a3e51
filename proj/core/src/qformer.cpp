#include "dualcap/qformer.hpp"

#include "dualcap/errors.hpp"
#include "dualcap/tokenizer.hpp"

#include <algorithm>
#include <cmath>

namespace dualcap {

std::string_view to_string(MaskMode mode) {
  switch (mode) {
    case MaskMode::kItc:
      return "itc";
    case MaskMode::kItm:
      return "itm";
    case MaskMode::kItg:
      return "itg";
    case MaskMode::kCaption:
      return "caption";
  }
  return "?";
}

AttentionMask build_attention_mask(MaskMode mode, int queries, int text) {
  if (queries < 1) throw ConfigError("attention mask needs at least one query");
  if (text < 0) throw ConfigError("negative text length");
  if (mode == MaskMode::kCaption && text != 0) throw ConfigError("caption mode takes no text rows");
  if (mode != MaskMode::kCaption && text == 0)
    throw ConfigError(std::string(to_string(mode)) + " mask needs text rows");

  const int n = queries + text;
  AttentionMask mask{mode, queries, text, ag::BoolMatrix::Constant(n, n, false)};
  auto& a = mask.allowed;
  switch (mode) {
    case MaskMode::kCaption:
    case MaskMode::kItm:
      a.setConstant(true);
      break;
    case MaskMode::kItc:
      a.topLeftCorner(queries, queries).setConstant(true);
      a.bottomRightCorner(text, text).setConstant(true);
      break;
    case MaskMode::kItg:
      a.topLeftCorner(queries, queries).setConstant(true);
      for (int t = 0; t < text; ++t) {
        a.row(queries + t).head(queries).setConstant(true);
        a.row(queries + t).segment(queries, t + 1).setConstant(true);
      }
      break;
  }
  return mask;
}

void validate(const QFormerConfig& cfg) {
  if (cfg.queries < 1) throw ConfigError("qformer.queries must be >= 1");
  if (cfg.hidden < 1 || cfg.heads < 1 || cfg.hidden % cfg.heads != 0)
    throw ConfigError("qformer.hidden must be a positive multiple of qformer.heads");
  if (cfg.layers < 1) throw ConfigError("qformer.layers must be >= 1");
  if (cfg.ffn_mult < 1 || cfg.itc_dim < 1) throw ConfigError("qformer.ffn_mult and itc_dim must be positive");
  if (!(cfg.temperature_init > 0.0)) throw ConfigError("qformer.temperature_init must be positive");
  if (cfg.vocab <= kNumSpecials) throw ConfigError("qformer vocabulary is empty");
  if (cfg.image_dims < 1 || cfg.lm_width < 1) throw ConfigError("qformer image/lm widths must be positive");
  if (cfg.max_text < 2) throw ConfigError("qformer.max_text must be >= 2");
}

void QFormerBlock::visit(const ParamVisitor& fn) {
  self_attn.visit(fn);
  self_norm.visit(fn);
  cross_attn.visit(fn);
  cross_norm.visit(fn);
  ffn_in.visit(fn);
  ffn_out.visit(fn);
  ffn_norm.visit(fn);
}

QFormer::QFormer(std::string branch, const QFormerConfig& cfg) : branch_(std::move(branch)), cfg_(cfg) {
  validate(cfg_);
  Rng rng(cfg_.seed);
  const int d = cfg_.hidden;
  const std::string p = branch_ + ".";
  queries = Parameter(p + "queries", random_normal(rng, cfg_.queries, d, 1.0));
  text_embed = Parameter(p + "text_embed", random_normal(rng, cfg_.vocab, d, 1.0));
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string b = p + "blocks." + std::to_string(l) + ".";
    QFormerBlock block;
    block.self_attn = AttentionWeights(b + "self", d, d, rng);
    block.self_norm = LayerNorm(b + "self_norm", d);
    block.cross_attn = AttentionWeights(b + "cross", d, cfg_.image_dims, rng);
    block.cross_norm = LayerNorm(b + "cross_norm", d);
    block.ffn_in = Linear(b + "ffn_in", d, d * cfg_.ffn_mult, rng);
    block.ffn_out = Linear(b + "ffn_out", d * cfg_.ffn_mult, d, rng);
    block.ffn_norm = LayerNorm(b + "ffn_norm", d);
    blocks.push_back(std::move(block));
  }
  itc_query = Linear(p + "heads.itc_query", d, cfg_.itc_dim, rng);
  itc_text = Linear(p + "heads.itc_text", d, cfg_.itc_dim, rng);
  temperature = Parameter(p + "heads.temperature", Matrix::Constant(1, 1, cfg_.temperature_init));
  itm_head = Linear(p + "heads.itm", d, 1, rng);
  itg_head = Linear(p + "heads.itg", d, cfg_.vocab, rng);
  proj = Linear(p + "proj", d, cfg_.lm_width, rng);
  text_positions = sinusoidal_positions(cfg_.max_text, d);
}

void QFormer::visit(const ParamVisitor& fn) {
  fn(queries);
  fn(text_embed);
  for (auto& b : blocks) b.visit(fn);
  itc_query.visit(fn);
  itc_text.visit(fn);
  fn(temperature);
  itm_head.visit(fn);
  itg_head.visit(fn);
  proj.visit(fn);
}

ParamList QFormer::params() {
  ParamList out;
  visit([&](Parameter& p) { out.push_back(&p); });
  return out;
}

std::string_view param_group(std::string_view name) {
  const auto first = name.find('.');
  if (first == std::string_view::npos) return {};
  const auto rest = name.substr(first + 1);
  return rest.substr(0, rest.find('.'));
}

ParamList QFormer::params_in(std::span<const std::string_view> groups) {
  ParamList out;
  visit([&](Parameter& p) {
    if (std::find(groups.begin(), groups.end(), param_group(p.name)) != groups.end()) out.push_back(&p);
  });
  return out;
}

void QFormer::clamp_temperature() {
  temperature.value(0, 0) = std::clamp(temperature.value(0, 0), 0.001, 0.5);
}

QFormerGraph::QFormerGraph(QFormer& m)
    : queries(ag::leaf(m.queries)),
      text_embed(ag::leaf(m.text_embed)),
      itc_query(m.itc_query),
      itc_text(m.itc_text),
      temperature(ag::leaf(m.temperature)),
      itm_head(m.itm_head),
      itg_head(m.itg_head),
      proj(m.proj),
      model_(&m) {
  for (auto& b : m.blocks)
    blocks.push_back(Block{BoundAttention(b.self_attn), BoundLayerNorm(b.self_norm), BoundAttention(b.cross_attn),
                           BoundLayerNorm(b.cross_norm), BoundLinear(b.ffn_in), BoundLinear(b.ffn_out),
                           BoundLayerNorm(b.ffn_norm)});
}

QFormerOutput qformer_forward(QFormerGraph& graph, const FeatureSeq& image, std::span<const int> text_ids,
                              MaskMode mode) {
  const QFormerConfig& cfg = graph.model().config();
  if (image.dims() != cfg.image_dims)
    throw DataError("image feature width " + std::to_string(image.dims()) + " does not match branch width " +
                    std::to_string(cfg.image_dims));
  const int m = cfg.queries;
  const int t = static_cast<int>(text_ids.size());
  if (mode == MaskMode::kCaption && t != 0) throw ConfigError("caption mode takes no text");
  if (mode != MaskMode::kCaption && t == 0) throw ConfigError("text is required in " + std::string(to_string(mode)));
  if (t > cfg.max_text) throw DataError("caption longer than qformer.max_text");

  const AttentionMask mask = build_attention_mask(mode, m, t);
  const ag::BoolMatrix cross_mask = ag::BoolMatrix::Constant(m, image.rows(), true);
  const ag::Var img = ag::constant(image.values);

  ag::Var x = graph.queries;
  if (t > 0) {
    const Matrix positions = graph.model().text_positions.topRows(t);
    const ag::Var text = ag::add_const(ag::embedding(graph.text_embed, text_ids), positions);
    const std::vector<ag::Var> parts{x, text};
    x = ag::concat_rows(parts);
  }

  for (std::size_t l = 0; l < graph.blocks.size(); ++l) {
    const auto& b = graph.blocks[l];
    x = b.self_norm(ag::add(x, b.self_attn(x, x, mask.allowed, cfg.heads)));
    ag::Var q = ag::rows(x, 0, m);
    q = b.cross_norm(ag::add(q, b.cross_attn(q, img, cross_mask, cfg.heads)));
    if (t > 0) {
      const std::vector<ag::Var> parts{q, ag::rows(x, m, t)};
      x = ag::concat_rows(parts);
    } else {
      x = q;
    }
    x = b.ffn_norm(ag::add(x, b.ffn_out(ag::gelu(b.ffn_in(x)))));
    if (!x.value().allFinite())
      throw NumericError("non-finite activations in " + graph.model().branch() + " qformer block " +
                         std::to_string(l));
  }
  return QFormerOutput{ag::rows(x, 0, m), ag::rows(x, m, t)};
}

ag::Var contrastive_loss(const ag::Var& similarity, const ag::Var& temperature) {
  const auto b = similarity.rows();
  if (b < 2 || similarity.cols() != b) throw ConfigError("contrastive loss needs a square batch of >= 2");
  const ag::Var logits = ag::scale_by(similarity, ag::reciprocal(temperature));
  std::vector<int> diag(static_cast<std::size_t>(b));
  for (Eigen::Index i = 0; i < b; ++i) diag[static_cast<std::size_t>(i)] = static_cast<int>(i);
  const ag::Var i2t = ag::cross_entropy_sum(logits, diag);
  const ag::Var t2i = ag::cross_entropy_sum(ag::transpose(logits), diag);
  return ag::scale(ag::add(i2t, t2i), 0.5 / static_cast<double>(b));
}

namespace {

std::vector<int> with_cls(const std::vector<int>& caption) {
  if (caption.empty()) throw DataError("empty caption");
  std::vector<int> ids = caption;
  ids[0] = kCls;
  return ids;
}

void require_batch(std::span<const PairRef> batch, const char* what) {
  if (batch.size() < 2) throw ConfigError(std::string(what) + " needs a batch of at least 2 pairs");
}

}  // namespace

ag::Var itc_loss(QFormerGraph& graph, std::span<const PairRef> batch) {
  require_batch(batch, "itc_loss");
  const Eigen::Index m = graph.model().config().queries;
  std::vector<ag::Var> image_embeds;
  std::vector<ag::Var> text_embeds;
  for (const PairRef& pair : batch) {
    const std::vector<int> ids = with_cls(*pair.caption);
    const QFormerOutput out = qformer_forward(graph, *pair.image, ids, MaskMode::kItc);
    image_embeds.push_back(ag::normalize_rows(graph.itc_query(out.query_states)));
    text_embeds.push_back(ag::normalize_rows(graph.itc_text(ag::rows(out.text_states, 0, 1))));
  }
  const ag::Var z = ag::concat_rows(image_embeds);  // B*M x K
  const ag::Var tx = ag::concat_rows(text_embeds);   // B x K
  const ag::Var sim = ag::group_max_rows(ag::matmul(z, ag::transpose(tx)), m);  // B x B
  return contrastive_loss(sim, graph.temperature);
}

ag::Var itm_loss(QFormerGraph& graph, std::span<const PairRef> batch, Rng& rng) {
  require_batch(batch, "itm_loss");
  std::vector<ag::Var> logits;
  std::vector<double> labels;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::size_t neg = uniform_index(rng, batch.size() - 1);
    if (neg >= i) ++neg;
    for (const auto& [text_index, label] : {std::pair{i, 1.0}, std::pair{neg, 0.0}}) {
      const std::vector<int> ids = with_cls(*batch[text_index].caption);
      const QFormerOutput out = qformer_forward(graph, *batch[i].image, ids, MaskMode::kItm);
      logits.push_back(ag::mean_all(graph.itm_head(out.query_states)));
      labels.push_back(label);
    }
  }
  const ag::Var total = ag::bce_with_logits_sum(ag::concat_rows(logits), labels);
  return ag::scale(total, 1.0 / static_cast<double>(labels.size()));
}

ag::Var itg_loss(QFormerGraph& graph, std::span<const PairRef> batch) {
  if (batch.empty()) throw ConfigError("itg_loss needs a non-empty batch");
  ag::Var total;
  std::size_t count = 0;
  for (const PairRef& pair : batch) {
    const std::vector<int>& ids = *pair.caption;
    if (ids.size() < 2) throw DataError("caption too short for next-token prediction");
    std::vector<int> targets(ids.size(), -1);
    for (std::size_t t = 0; t + 1 < ids.size(); ++t)
      if (ids[t + 1] != kPad) {
        targets[t] = ids[t + 1];
        ++count;
      }
    const QFormerOutput out = qformer_forward(graph, *pair.image, ids, MaskMode::kItg);
    const ag::Var ce = ag::cross_entropy_sum(graph.itg_head(out.text_states), targets);
    total = total.defined() ? ag::add(total, ce) : ce;
  }
  if (count == 0) throw DataError("itg_loss: every caption position is padding");
  return ag::scale(total, 1.0 / static_cast<double>(count));
}

ag::Var project_queries(QFormerGraph& graph, const ag::Var& query_states) {
  const auto& cfg = graph.model().config();
  if (query_states.cols() != cfg.hidden) throw DataError("query state width mismatch");
  return graph.proj(query_states);
}

}  // namespace dualcap
