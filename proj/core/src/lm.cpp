#include "dualcap/lm.hpp"

#include "dualcap/errors.hpp"
#include "dualcap/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dualcap {

void validate(const LmConfig& cfg) {
  if (cfg.vocab <= kNumSpecials) throw ConfigError("lm vocabulary is empty");
  if (cfg.width < 1 || cfg.heads < 1 || cfg.width % cfg.heads != 0)
    throw ConfigError("lm.width must be a positive multiple of lm.heads");
  if (cfg.layers < 1 || cfg.ffn_mult < 1) throw ConfigError("lm.layers and lm.ffn_mult must be positive");
  if (cfg.max_context < 2) throw ConfigError("lm.max_context must be >= 2");
}

void DecoderBlock::visit(const ParamVisitor& fn) {
  attn_norm.visit(fn);
  attn.visit(fn);
  ffn_norm.visit(fn);
  ffn_in.visit(fn);
  ffn_out.visit(fn);
}

FrozenLM::FrozenLM(const LmConfig& cfg) : cfg_(cfg) {
  validate(cfg_);
  Rng rng(cfg_.seed);
  const int d = cfg_.width;
  token_embed = Parameter("lm.token_embed", random_normal(rng, cfg_.vocab, d, 1.0));
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string b = "lm.blocks." + std::to_string(l) + ".";
    DecoderBlock block;
    block.attn_norm = LayerNorm(b + "attn_norm", d);
    block.attn = AttentionWeights(b + "attn", d, d, rng);
    block.ffn_norm = LayerNorm(b + "ffn_norm", d);
    block.ffn_in = Linear(b + "ffn_in", d, d * cfg_.ffn_mult, rng);
    block.ffn_out = Linear(b + "ffn_out", d * cfg_.ffn_mult, d, rng);
    blocks.push_back(std::move(block));
  }
  final_norm = LayerNorm("lm.final_norm", d);
  head = Linear("lm.head", d, cfg_.vocab, rng);
  positions = sinusoidal_positions(cfg_.max_context, d);
}

void FrozenLM::visit(const ParamVisitor& fn) {
  fn(token_embed);
  for (auto& b : blocks) b.visit(fn);
  final_norm.visit(fn);
  head.visit(fn);
}

void FrozenLM::visit(const ConstParamVisitor& fn) const {
  const_cast<FrozenLM*>(this)->visit([&](Parameter& p) { fn(p); });
}

ParamList FrozenLM::params() {
  ParamList out;
  visit([&](Parameter& p) { out.push_back(&p); });
  return out;
}

void FrozenLM::freeze() {
  visit([](Parameter& p) { p.frozen = true; });
  frozen_ = true;
}

std::string FrozenLM::fingerprint() const {
  std::vector<const Parameter*> ps;
  visit(ConstParamVisitor([&](const Parameter& p) { ps.push_back(&p); }));
  return dualcap::fingerprint(ps);
}

LmGraph::LmGraph(FrozenLM& lm)
    : token_embed(ag::leaf(lm.token_embed)), final_norm(lm.final_norm), head(lm.head), lm_(&lm) {
  for (auto& b : lm.blocks)
    blocks.push_back(Block{BoundLayerNorm(b.attn_norm), BoundAttention(b.attn), BoundLayerNorm(b.ffn_norm),
                           BoundLinear(b.ffn_in), BoundLinear(b.ffn_out)});
}

PrefixEmbedding build_prefix(LmGraph& lm, const ag::Var& clip_proj, const ag::Var& sam_proj,
                             std::span<const int> prompt) {
  const int width = lm.model().config().width;
  PrefixEmbedding prefix;
  std::vector<ag::Var> parts;
  for (const auto& [var, count] : {std::pair{&clip_proj, &prefix.clip_rows}, std::pair{&sam_proj, &prefix.sam_rows}}) {
    if (!var->defined() || var->rows() == 0) continue;
    if (var->cols() != width)
      throw DataError("prefix width " + std::to_string(var->cols()) + " does not match lm width " +
                      std::to_string(width));
    *count = static_cast<int>(var->rows());
    parts.push_back(*var);
  }
  if (!prompt.empty()) {
    parts.push_back(ag::embedding(lm.token_embed, prompt));
    prefix.prompt_rows = static_cast<int>(prompt.size());
  }
  prefix.rows = parts.empty() ? ag::constant(Matrix(0, width)) : ag::concat_rows(parts);
  return prefix;
}

ag::Var lm_logits(LmGraph& lm, const PrefixEmbedding& prefix, std::span<const int> caption_ids) {
  const LmConfig& cfg = lm.model().config();
  const auto n_prefix = static_cast<Eigen::Index>(prefix.size());
  const auto n_text = static_cast<Eigen::Index>(caption_ids.size());
  const Eigen::Index total = n_prefix + n_text;
  if (n_text == 0) throw DataError("empty caption");
  if (total > cfg.max_context)
    throw DataError("prefix + caption length " + std::to_string(total) + " exceeds lm.max_context " +
                    std::to_string(cfg.max_context));

  const std::vector<ag::Var> parts{prefix.rows, ag::embedding(lm.token_embed, caption_ids)};
  const Matrix positions = lm.model().positions.topRows(total);
  ag::Var x = ag::add_const(ag::concat_rows(parts), positions);

  ag::BoolMatrix causal = ag::BoolMatrix::Constant(total, total, false);
  for (Eigen::Index i = 0; i < total; ++i) causal.row(i).head(i + 1).setConstant(true);

  for (const auto& b : lm.blocks) {
    const ag::Var h = b.attn_norm(x);
    x = ag::add(x, b.attn(h, h, causal, cfg.heads));
    x = ag::add(x, b.ffn_out(ag::gelu(b.ffn_in(b.ffn_norm(x)))));
  }
  const ag::Var out = lm.head(lm.final_norm(ag::rows(x, n_prefix, n_text)));
  if (!out.value().allFinite()) throw NumericError("non-finite lm logits");
  return out;
}

ag::Var lm_loss(LmGraph& lm, const PrefixEmbedding& prefix, std::span<const int> caption_ids) {
  if (caption_ids.size() < 2 || caption_ids.front() != kBos || caption_ids.back() != kEos)
    throw DataError("lm_loss expects a BOS...EOS framed caption");
  std::vector<int> targets(caption_ids.size(), -1);
  std::size_t count = 0;
  for (std::size_t t = 0; t + 1 < caption_ids.size(); ++t)
    if (caption_ids[t + 1] != kPad) {
      targets[t] = caption_ids[t + 1];
      ++count;
    }
  const ag::Var ce = ag::cross_entropy_sum(lm_logits(lm, prefix, caption_ids), targets);
  return ag::scale(ce, 1.0 / static_cast<double>(count));
}

namespace {

RowVector last_log_probs(LmGraph& lm, const PrefixEmbedding& prefix, const std::vector<int>& ids) {
  const ag::Var logits = lm_logits(lm, prefix, ids);
  RowVector row = logits.value().row(logits.rows() - 1);
  const double mx = row.maxCoeff();
  const double lse = mx + std::log((row.array() - mx).exp().sum());
  row.array() -= lse;
  return row;
}

int argmax_lowest(const RowVector& row) {
  int best = 0;
  for (int i = 1; i < row.size(); ++i)
    if (row(i) > row(best)) best = i;
  return best;
}

struct Hypothesis {
  std::vector<int> ids;  // generated after BOS, EOS excluded
  double log_prob = 0.0;
  int length = 0;  // generated tokens, EOS included
};

double normalized(const Hypothesis& h, double alpha) {
  return h.length == 0 ? h.log_prob : h.log_prob / std::pow(static_cast<double>(h.length), alpha);
}

}  // namespace

std::vector<int> generate_ids(LmGraph& lm, const PrefixEmbedding& prefix, const DecodeOptions& options) {
  if (options.max_len < 1) throw ConfigError("decode.max_len must be >= 1");
  const int room = lm.model().config().max_context - prefix.size() - 1;
  const int max_len = std::min(options.max_len, room);
  if (max_len < 1) throw DataError("prefix leaves no room to generate within lm.max_context");

  if (options.strategy == DecodeOptions::Strategy::kGreedy) {
    std::vector<int> seq{kBos};
    for (int step = 0; step < max_len; ++step) {
      const int next = argmax_lowest(last_log_probs(lm, prefix, seq));
      if (next == kEos) break;
      seq.push_back(next);
    }
    return {seq.begin() + 1, seq.end()};
  }

  if (options.beam_size < 1) throw ConfigError("beam size must be >= 1");
  const auto k = static_cast<std::size_t>(options.beam_size);
  std::vector<Hypothesis> alive{Hypothesis{}};
  std::vector<Hypothesis> finished;
  for (int step = 0; step < max_len && !alive.empty(); ++step) {
    struct Candidate {
      double score;
      std::size_t beam;
      int token;
      double log_prob;
    };
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < alive.size(); ++b) {
      std::vector<int> seq{kBos};
      seq.insert(seq.end(), alive[b].ids.begin(), alive[b].ids.end());
      const RowVector lp = last_log_probs(lm, prefix, seq);
      for (int tok = 0; tok < lp.size(); ++tok) {
        const double total = alive[b].log_prob + lp(tok);
        const double score = total / std::pow(static_cast<double>(alive[b].length + 1), options.length_alpha);
        cands.push_back(Candidate{score, b, tok, total});
      }
    }
    const std::size_t take = std::min(k, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.beam != b.beam) return a.beam < b.beam;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < take; ++i) {
      const Candidate& c = cands[i];
      Hypothesis h = alive[c.beam];
      h.log_prob = c.log_prob;
      h.length += 1;
      if (c.token == kEos) {
        finished.push_back(std::move(h));
      } else {
        h.ids.push_back(c.token);
        next.push_back(std::move(h));
      }
    }
    alive = std::move(next);
  }
  std::vector<Hypothesis> pool = std::move(finished);
  pool.insert(pool.end(), alive.begin(), alive.end());
  const auto best = std::max_element(pool.begin(), pool.end(), [&](const Hypothesis& a, const Hypothesis& b) {
    return normalized(a, options.length_alpha) < normalized(b, options.length_alpha);
  });
  return best->ids;
}

std::string generate(LmGraph& lm, const PrefixEmbedding& prefix, const DecodeOptions& options,
                     const Tokenizer& tokenizer) {
  return tokenizer.decode(generate_ids(lm, prefix, options));
}

double sequence_log_prob(LmGraph& lm, const PrefixEmbedding& prefix, std::span<const int> ids, bool include_eos) {
  std::vector<int> seq{kBos};
  seq.insert(seq.end(), ids.begin(), ids.end());
  if (include_eos) seq.push_back(kEos);
  const ag::Var logits = lm_logits(lm, prefix, seq);
  double total = 0.0;
  for (Eigen::Index t = 0; t + 1 < static_cast<Eigen::Index>(seq.size()); ++t) {
    const auto row = logits.value().row(t);
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    total += row(seq[static_cast<std::size_t>(t + 1)]) - lse;
  }
  return total;
}

namespace {

// Distinct non-special ids of a framed caption, shuffled.
std::vector<int> caption_words(const std::vector<int>& ids, Rng& rng) {
  std::vector<int> words;
  for (const int id : ids)
    if (id >= kNumSpecials && std::find(words.begin(), words.end(), id) == words.end()) words.push_back(id);
  for (std::size_t i = words.size(); i > 1; --i) std::swap(words[i - 1], words[uniform_index(rng, i)]);
  return words;
}

}  // namespace

FrozenLM pretrain_toy_lm(std::span<const std::vector<int>> captions, std::span<const int> prompt,
                         const LmConfig& cfg, const LmPretrainConfig& train) {
  if (captions.empty()) throw DataError("cannot pre-train the language model on an empty corpus");
  if (train.steps < 1 || train.batch_size < 1) throw ConfigError("lm pretrain steps and batch_size must be >= 1");
  if (train.word_prefix_rate < 0.0 || train.word_prefix_rate > 1.0 || train.word_prefix_rows < 0)
    throw ConfigError("lm pretrain word prefix rate must be in [0, 1] and rows >= 0");
  FrozenLM lm(cfg);
  const ParamList params = lm.params();
  AdamW opt(OptimizerConfig{train.lr, 0.9, 0.999, 1e-8, train.weight_decay});
  Rng rng(train.seed);
  for (int step = 0; step < train.steps; ++step) {
    zero_grads(params);
    LmGraph graph(lm);
    const PrefixEmbedding plain = build_prefix(graph, ag::Var(), ag::Var(), prompt);
    ag::Var total;
    for (int i = 0; i < train.batch_size; ++i) {
      const auto& ids = captions[uniform_index(rng, captions.size())];
      const bool with_words = uniform01(rng) < train.word_prefix_rate;
      std::vector<int> words = with_words ? caption_words(ids, rng) : std::vector<int>{};
      if (words.size() > static_cast<std::size_t>(train.word_prefix_rows))
        words.resize(static_cast<std::size_t>(train.word_prefix_rows));
      const ag::Var loss =
          words.empty() ? lm_loss(graph, plain, ids)
                        : lm_loss(graph, build_prefix(graph, ag::embedding(graph.token_embed, words), ag::Var(), prompt),
                                  ids);
      total = total.defined() ? ag::add(total, loss) : loss;
    }
    total = ag::scale(total, 1.0 / train.batch_size);
    if (!std::isfinite(total.item())) throw NumericError("non-finite lm loss at step " + std::to_string(step));
    ag::backward(total);
    opt.step(params);
  }
  lm.freeze();
  return lm;
}

double perplexity(FrozenLM& lm, std::span<const std::vector<int>> captions, std::span<const int> prompt) {
  LmGraph graph(lm);
  const PrefixEmbedding prefix = build_prefix(graph, ag::Var(), ag::Var(), prompt);
  double nll = 0.0;
  std::size_t count = 0;
  for (const auto& ids : captions) {
    const std::vector<int> words(ids.begin() + 1, ids.end() - 1);
    nll -= sequence_log_prob(graph, prefix, words, true);
    count += ids.size() - 1;
  }
  return std::exp(nll / static_cast<double>(count));
}

}  // namespace dualcap
