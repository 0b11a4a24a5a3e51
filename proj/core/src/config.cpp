#include "dualcap/config.hpp"

#include "dualcap/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace dualcap {
namespace {

using nlohmann::json;

// Reads keys of one JSON object into existing defaults and remembers which keys
// were consumed, so leftovers can be reported as unknown.
class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError("config section '" + label() + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!node_.contains(key)) return;
    seen_.insert(key);
    try {
      out = node_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + qualified(key) + "' has the wrong type");
    }
  }

  bool has(const char* key) const { return node_.contains(key); }

  Reader child(const char* key) {
    seen_.insert(key);
    return Reader(node_.at(key), qualified(key));
  }

  void finish() const {
    for (const auto& [key, value] : node_.items())
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + qualified(key) + "'");
  }

 private:
  std::string label() const { return path_.empty() ? "<root>" : path_; }
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

json optimizer_json(const OptimizerConfig& o) {
  return {{"lr", o.lr}, {"beta1", o.beta1}, {"beta2", o.beta2}, {"eps", o.eps}, {"weight_decay", o.weight_decay}};
}

void read_optimizer(Reader r, OptimizerConfig& o) {
  r.get("lr", o.lr);
  r.get("beta1", o.beta1);
  r.get("beta2", o.beta2);
  r.get("eps", o.eps);
  r.get("weight_decay", o.weight_decay);
  r.finish();
}

json encoder_json(const EncoderSpec& e) {
  return {{"kind", e.kind == EncoderKind::kGeneral ? "general" : "detail"},
          {"image_size", e.image_size},
          {"patch_size", e.patch_size},
          {"rows", e.rows},
          {"dims", e.dims},
          {"blur_kernel", e.blur_kernel},
          {"weight_scale", e.weight_scale},
          {"seed", e.seed}};
}

void read_encoder(Reader r, EncoderSpec& e) {
  std::string kind = e.kind == EncoderKind::kGeneral ? "general" : "detail";
  r.get("kind", kind);
  if (kind != (e.kind == EncoderKind::kGeneral ? "general" : "detail"))
    throw ConfigError("encoder kind '" + kind + "' does not match its section");
  r.get("image_size", e.image_size);
  r.get("patch_size", e.patch_size);
  r.get("rows", e.rows);
  r.get("dims", e.dims);
  r.get("blur_kernel", e.blur_kernel);
  r.get("weight_scale", e.weight_scale);
  r.get("seed", e.seed);
  r.finish();
}

std::string strategy_name(DecodeOptions::Strategy s) {
  return s == DecodeOptions::Strategy::kGreedy ? "greedy" : "beam";
}

json to_json(const RunConfig& c) {
  const auto& k = c.corpus;
  const auto& q = c.qformer;
  json out;
  out["data_dir"] = c.data_dir;
  out["corpus"] = {{"image_size", k.image_size},       {"general_train", k.general_train},
                   {"general_test", k.general_test},   {"medical_train", k.medical_train},
                   {"medical_test", k.medical_test},   {"max_shapes", k.max_shapes},
                   {"max_medical_shapes", k.max_medical_shapes}, {"max_marks", k.max_marks},
                   {"mark_size", k.mark_size},         {"mark_grid", k.mark_grid},
                   {"blur_kernel", k.blur_kernel},     {"shapes", k.shapes},
                   {"colors", k.colors},               {"marks", k.marks},
                   {"regions", k.regions}};
  out["tokenizer"] = {{"min_freq", c.tokenizer.min_freq}, {"max_tokens", c.tokenizer.max_tokens}, {"lowercase", true}};
  out["encoders"] = {{"general", encoder_json(c.general_encoder)}, {"detail", encoder_json(c.detail_encoder)}};
  out["qformer"] = {{"queries", q.queries}, {"hidden", q.hidden},         {"layers", q.layers},
                    {"heads", q.heads},     {"ffn_mult", q.ffn_mult},     {"itc_dim", q.itc_dim},
                    {"temperature_init", q.temperature_init},             {"max_text", q.max_text},
                    {"share_text_embedding", false}};
  out["lm"] = {{"width", c.lm.width},
               {"layers", c.lm.layers},
               {"heads", c.lm.heads},
               {"ffn_mult", c.lm.ffn_mult},
               {"max_context", c.lm.max_context},
               {"seed", c.lm.seed},
               {"pretrain",
                {{"steps", c.lm_pretrain.steps},
                 {"batch_size", c.lm_pretrain.batch_size},
                 {"lr", c.lm_pretrain.lr},
                 {"weight_decay", c.lm_pretrain.weight_decay},
                 {"word_prefix_rate", c.lm_pretrain.word_prefix_rate},
                 {"word_prefix_rows", c.lm_pretrain.word_prefix_rows},
                 {"seed", c.lm_pretrain.seed}}}};
  out["prompt"] = c.prompt;
  out["pretrain"] = {{"epochs", c.pretrain.epochs},
                     {"batch_size", c.pretrain.batch_size},
                     {"optimizer", optimizer_json(c.pretrain.optimizer)},
                     {"clip_mix", c.pretrain.clip_mix},
                     {"sam_mix", c.pretrain.sam_mix},
                     {"loss_weights", {{"itc", 1.0}, {"itm", 1.0}, {"itg", 1.0}}}};
  out["finetune"] = {{"epochs", c.finetune.epochs},
                     {"batch_size", c.finetune.batch_size},
                     {"optimizer", optimizer_json(c.finetune.optimizer)},
                     {"mix", c.finetune.mix}};
  out["decode"] = {{"strategy", strategy_name(c.decode.strategy)},
                   {"beam_size", c.decode.beam_size},
                   {"length_alpha", c.decode.length_alpha},
                   {"max_len", c.decode.max_len}};
  out["metrics"] = {{"bleu", c.bleu_mode == BleuMode::kCorpus ? "corpus" : "sentence"}};
  out["seed"] = c.seed;
  out["ablation"] = {{"grid", c.ablation.grid}, {"seeds", c.ablation.seeds}};
  return out;
}

// Fixed-value keys are echoed in the resolved config for documentation; they may
// be present in input only with their fixed value.
template <typename T>
void expect_fixed(Reader& r, const char* key, const T& fixed) {
  T value = fixed;
  r.get(key, value);
  if (value != fixed) throw ConfigError(std::string("config key '") + key + "' is fixed and cannot be changed");
}

RunConfig from_json(const json& root) {
  RunConfig c;
  Reader r(root, "");
  r.get("data_dir", c.data_dir);
  if (r.has("corpus")) {
    Reader k = r.child("corpus");
    auto& v = c.corpus;
    k.get("image_size", v.image_size);
    k.get("general_train", v.general_train);
    k.get("general_test", v.general_test);
    k.get("medical_train", v.medical_train);
    k.get("medical_test", v.medical_test);
    k.get("max_shapes", v.max_shapes);
    k.get("max_medical_shapes", v.max_medical_shapes);
    k.get("max_marks", v.max_marks);
    k.get("mark_size", v.mark_size);
    k.get("mark_grid", v.mark_grid);
    k.get("blur_kernel", v.blur_kernel);
    k.get("shapes", v.shapes);
    k.get("colors", v.colors);
    k.get("marks", v.marks);
    k.get("regions", v.regions);
    k.finish();
  }
  if (r.has("tokenizer")) {
    Reader t = r.child("tokenizer");
    t.get("min_freq", c.tokenizer.min_freq);
    t.get("max_tokens", c.tokenizer.max_tokens);
    expect_fixed(t, "lowercase", true);
    t.finish();
  }
  if (r.has("encoders")) {
    Reader e = r.child("encoders");
    if (e.has("general")) read_encoder(e.child("general"), c.general_encoder);
    if (e.has("detail")) read_encoder(e.child("detail"), c.detail_encoder);
    e.finish();
  }
  if (r.has("qformer")) {
    Reader q = r.child("qformer");
    q.get("queries", c.qformer.queries);
    q.get("hidden", c.qformer.hidden);
    q.get("layers", c.qformer.layers);
    q.get("heads", c.qformer.heads);
    q.get("ffn_mult", c.qformer.ffn_mult);
    q.get("itc_dim", c.qformer.itc_dim);
    q.get("temperature_init", c.qformer.temperature_init);
    q.get("max_text", c.qformer.max_text);
    expect_fixed(q, "share_text_embedding", false);
    q.finish();
  }
  if (r.has("lm")) {
    Reader l = r.child("lm");
    l.get("width", c.lm.width);
    l.get("layers", c.lm.layers);
    l.get("heads", c.lm.heads);
    l.get("ffn_mult", c.lm.ffn_mult);
    l.get("max_context", c.lm.max_context);
    l.get("seed", c.lm.seed);
    if (l.has("pretrain")) {
      Reader p = l.child("pretrain");
      p.get("steps", c.lm_pretrain.steps);
      p.get("batch_size", c.lm_pretrain.batch_size);
      p.get("lr", c.lm_pretrain.lr);
      p.get("weight_decay", c.lm_pretrain.weight_decay);
      p.get("word_prefix_rate", c.lm_pretrain.word_prefix_rate);
      p.get("word_prefix_rows", c.lm_pretrain.word_prefix_rows);
      p.get("seed", c.lm_pretrain.seed);
      p.finish();
    }
    l.finish();
  }
  r.get("prompt", c.prompt);
  if (r.has("pretrain")) {
    Reader p = r.child("pretrain");
    p.get("epochs", c.pretrain.epochs);
    p.get("batch_size", c.pretrain.batch_size);
    if (p.has("optimizer")) read_optimizer(p.child("optimizer"), c.pretrain.optimizer);
    p.get("clip_mix", c.pretrain.clip_mix);
    p.get("sam_mix", c.pretrain.sam_mix);
    if (p.has("loss_weights")) {
      Reader w = p.child("loss_weights");
      expect_fixed(w, "itc", 1.0);
      expect_fixed(w, "itm", 1.0);
      expect_fixed(w, "itg", 1.0);
      w.finish();
    }
    p.finish();
  }
  if (r.has("finetune")) {
    Reader f = r.child("finetune");
    f.get("epochs", c.finetune.epochs);
    f.get("batch_size", c.finetune.batch_size);
    if (f.has("optimizer")) read_optimizer(f.child("optimizer"), c.finetune.optimizer);
    f.get("mix", c.finetune.mix);
    f.finish();
  }
  if (r.has("decode")) {
    Reader d = r.child("decode");
    std::string strategy = strategy_name(c.decode.strategy);
    d.get("strategy", strategy);
    if (strategy == "greedy") {
      c.decode.strategy = DecodeOptions::Strategy::kGreedy;
    } else if (strategy == "beam") {
      c.decode.strategy = DecodeOptions::Strategy::kBeam;
    } else {
      throw ConfigError("decode.strategy must be 'greedy' or 'beam'");
    }
    d.get("beam_size", c.decode.beam_size);
    d.get("length_alpha", c.decode.length_alpha);
    d.get("max_len", c.decode.max_len);
    d.finish();
  }
  if (r.has("metrics")) {
    Reader m = r.child("metrics");
    std::string bleu = "corpus";
    m.get("bleu", bleu);
    if (bleu == "corpus") {
      c.bleu_mode = BleuMode::kCorpus;
    } else if (bleu == "sentence") {
      c.bleu_mode = BleuMode::kSentenceMean;
    } else {
      throw ConfigError("metrics.bleu must be 'corpus' or 'sentence'");
    }
    m.finish();
  }
  r.get("seed", c.seed);
  if (r.has("ablation")) {
    Reader a = r.child("ablation");
    a.get("grid", c.ablation.grid);
    a.get("seeds", c.ablation.seeds);
    a.finish();
  }
  r.finish();
  return c;
}

bool valid_mix(const std::string& mix) { return mix == "G" || mix == "G+M" || mix == "-"; }

}  // namespace

void validate(const RunConfig& c) {
  validate(c.corpus);
  validate(c.general_encoder);
  validate(c.detail_encoder);
  if (c.general_encoder.kind != EncoderKind::kGeneral || c.detail_encoder.kind != EncoderKind::kDetail)
    throw ConfigError("encoder kinds must be general and detail");
  if (c.general_encoder.image_size != c.corpus.image_size || c.detail_encoder.image_size != c.corpus.image_size)
    throw ConfigError("encoder image_size must match corpus.image_size");
  if (c.tokenizer.min_freq < 1) throw ConfigError("tokenizer.min_freq must be >= 1");
  if (c.tokenizer.max_tokens < 2) throw ConfigError("tokenizer.max_tokens must be >= 2");
  if (c.tokenizer.max_tokens > c.qformer.max_text)
    throw ConfigError("tokenizer.max_tokens must not exceed qformer.max_text");
  const auto& q = c.qformer;
  if (q.queries < 1 || q.hidden < 1 || q.layers < 1 || q.heads < 1 || q.hidden % q.heads != 0 || q.ffn_mult < 1 ||
      q.itc_dim < 1 || q.max_text < 2)
    throw ConfigError("qformer dimensions must be positive and hidden divisible by heads");
  if (!(q.temperature_init > 0.0)) throw ConfigError("qformer.temperature_init must be positive");
  if (c.lm.width < 1 || c.lm.heads < 1 || c.lm.width % c.lm.heads != 0 || c.lm.layers < 1 || c.lm.ffn_mult < 1)
    throw ConfigError("lm dimensions must be positive and width divisible by heads");
  if (c.lm.max_context < 2 * q.queries + 2) throw ConfigError("lm.max_context too small for the prefix");
  if (c.lm_pretrain.word_prefix_rate < 0.0 || c.lm_pretrain.word_prefix_rate > 1.0 || c.lm_pretrain.word_prefix_rows < 0)
    throw ConfigError("lm.pretrain.word_prefix_rate must be in [0, 1] and word_prefix_rows >= 0");
  if (c.lm_pretrain.steps < 1 || c.lm_pretrain.batch_size < 1 || !(c.lm_pretrain.lr > 0.0))
    throw ConfigError("lm.pretrain needs steps, batch_size >= 1 and lr > 0");
  for (const auto* o : {&c.pretrain.optimizer, &c.finetune.optimizer})
    if (!(o->lr > 0.0) || o->beta1 < 0.0 || o->beta1 >= 1.0 || o->beta2 < 0.0 || o->beta2 >= 1.0 || !(o->eps > 0.0) ||
        o->weight_decay < 0.0)
      throw ConfigError("optimizer settings out of range");
  if (c.pretrain.epochs < 1 || c.finetune.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (c.pretrain.batch_size < 2) throw ConfigError("pretrain.batch_size must be >= 2 for in-batch negatives");
  if (c.finetune.batch_size < 2) throw ConfigError("finetune.batch_size must be >= 2");
  if (!valid_mix(c.pretrain.clip_mix) || !valid_mix(c.pretrain.sam_mix))
    throw ConfigError("pretrain mixes must be one of 'G', 'G+M', '-'");
  if (c.pretrain.clip_mix == "-" && c.pretrain.sam_mix == "-") throw ConfigError("at least one branch must be enabled");
  double positive = 0.0;
  for (const auto& [name, w] : c.finetune.mix) {
    if (name != "general" && name != "medical") throw ConfigError("finetune.mix names unknown dataset '" + name + "'");
    if (w < 0.0) throw ConfigError("finetune.mix weights must be nonnegative");
    positive += w;
  }
  if (!(positive > 0.0)) throw ConfigError("finetune.mix needs a positive weight");
  if (c.decode.beam_size < 1) throw ConfigError("decode.beam_size must be >= 1");
  if (c.decode.max_len < 1) throw ConfigError("decode.max_len must be >= 1");
  if (c.ablation.seeds.empty()) throw ConfigError("ablation.seeds must not be empty");
}

RunConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg = from_json(root);
  validate(cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string dump_config(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::filesystem::path data_path(const RunConfig& cfg, const std::filesystem::path& out_root) {
  const std::filesystem::path p(cfg.data_dir);
  return p.is_absolute() ? p : out_root / p;
}

}  // namespace dualcap
