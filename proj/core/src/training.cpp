#include "dualcap/training.hpp"

#include "dualcap/errors.hpp"
#include "dualcap/image.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace dualcap {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::string_view kFinetuneGroups[] = {"queries", "blocks", "proj"};
const std::string_view kPretrainGroups[] = {"queries", "text_embed", "blocks", "heads"};

std::string params_fingerprint(const ParamList& params) {
  std::vector<const Parameter*> ps(params.begin(), params.end());
  return fingerprint(ps);
}

ParamList params_outside(QFormer& q, std::span<const std::string_view> groups) {
  ParamList out;
  q.visit([&](Parameter& p) {
    if (std::find(groups.begin(), groups.end(), param_group(p.name)) == groups.end()) out.push_back(&p);
  });
  return out;
}

const FeatureSeq& branch_features(const EncodedDataset& d, Branch b, std::size_t i) {
  return b == Branch::kClip ? d.general[i] : d.detail[i];
}

std::string slug(const std::string& name) {
  std::string out;
  for (const char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (c == '+') {
      out += "plus";
    } else if (!out.empty() && out.back() != '-') {
      out.push_back('-');
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out;
}

std::string remove_spaces(const std::string& s) {
  std::string out;
  for (const char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
  return out;
}

}  // namespace

const EncodedDataset& TrainingData::dataset(const std::string& name) const {
  const auto it = datasets.find(name);
  if (it == datasets.end()) throw DataError("dataset '" + name + "' is not loaded");
  return it->second;
}

Tokenizer build_caption_tokenizer(const std::map<std::string, Manifest>& manifests, const TokenizerOptions& options) {
  std::vector<std::string> corpus;
  for (const auto& [name, m] : manifests)
    for (const auto& s : m.samples)
      if (s.split == Split::kTrain) corpus.push_back(s.caption);
  return Tokenizer::build(corpus, options.min_freq);
}

TrainingData prepare_training_data(std::map<std::string, Manifest> manifests, Tokenizer tokenizer,
                                   const TokenizerOptions& options, const ImageEncoder& general,
                                   const ImageEncoder& detail) {
  TrainingData data;
  data.tokenizer = std::move(tokenizer);
  data.encoder_fingerprints = {{"encoder.general", general.fingerprint()}, {"encoder.detail", detail.fingerprint()}};
  for (auto& [name, manifest] : manifests) {
    EncodedDataset d;
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
      const RgbImage image = read_ppm(manifest.image_path(i));
      d.general.push_back(encode_general(general, image));
      d.detail.push_back(encode_detail(detail, image));
      d.captions.push_back(data.tokenizer.encode(manifest.samples[i].caption,
                                                 static_cast<std::size_t>(options.max_tokens)));
      if (d.captions.back().size() < 3)
        throw DataError("caption of sample " + std::to_string(i) + " in " + name + " is empty after tokenization");
    }
    d.manifest = std::move(manifest);
    data.datasets.emplace(name, std::move(d));
  }
  return data;
}

std::map<std::string, Manifest> load_corpus_manifests(const fs::path& data_dir) {
  std::map<std::string, Manifest> out;
  for (const char* name : {"general", "medical"}) {
    const fs::path path = data_dir / (std::string(name) + ".jsonl");
    if (!fs::exists(path)) throw MissingArtifactError("missing manifest " + path.string() + " (run gen-data first)");
    out.emplace(name, load_manifest(path));
  }
  return out;
}

std::string_view branch_name(Branch b) { return b == Branch::kClip ? "clip" : "sam"; }

ParamList CaptionModel::params() const {
  ParamList out;
  for (QFormer* q : {clip.get(), sam.get()})
    if (q)
      for (Parameter* p : q->params()) out.push_back(p);
  return out;
}

ParamList CaptionModel::finetune_params() const {
  ParamList out;
  for (QFormer* q : {clip.get(), sam.get()})
    if (q)
      for (Parameter* p : q->params_in(kFinetuneGroups)) out.push_back(p);
  return out;
}

QFormerConfig branch_qformer_config(const RunConfig& cfg, Branch b, int vocab, std::uint64_t seed) {
  QFormerConfig q = cfg.qformer;
  q.vocab = vocab;
  q.image_dims = b == Branch::kClip ? cfg.general_encoder.dims : cfg.detail_encoder.dims;
  q.lm_width = cfg.lm.width;
  q.seed = derive_seed(seed, std::string(branch_name(b)) + ".init");
  return q;
}

CaptionModel make_caption_model(const RunConfig& cfg, int vocab, bool with_clip, bool with_sam, std::uint64_t seed) {
  if (!with_clip && !with_sam) throw ConfigError("a caption model needs at least one branch");
  CaptionModel m;
  if (with_clip) m.clip = std::make_unique<QFormer>("clip", branch_qformer_config(cfg, Branch::kClip, vocab, seed));
  if (with_sam) m.sam = std::make_unique<QFormer>("sam", branch_qformer_config(cfg, Branch::kSam, vocab, seed));
  return m;
}

std::string to_json_line(const StepLog& log) {
  json j;
  j["stage"] = log.stage;
  if (!log.branch.empty()) j["branch"] = log.branch;
  j["step"] = log.step;
  j["epoch"] = log.epoch;
  j["losses"] = log.losses;
  j["batch_mix"] = log.batch_mix;
  return j.dump();
}

std::map<std::string, std::vector<std::size_t>> train_pools(const TrainingData& data) {
  std::map<std::string, std::vector<std::size_t>> pools;
  for (const auto& [name, d] : data.datasets) pools[name] = d.manifest.indices(Split::kTrain);
  return pools;
}

MixSpec branch_mix(const std::string& mix, const TrainingData& data, std::uint64_t seed) {
  MixSpec spec;
  spec.seed = seed;
  const auto pools = train_pools(data);
  auto size_of = [&](const char* name) {
    const auto it = pools.find(name);
    return it == pools.end() ? 0.0 : static_cast<double>(it->second.size());
  };
  if (mix == "G") {
    spec.weights = {{"general", 1.0}};
  } else if (mix == "G+M") {
    spec.weights = {{"general", size_of("general")}, {"medical", size_of("medical")}};
  } else {
    throw ConfigError("unknown data mix '" + mix + "'");
  }
  return spec;
}

std::vector<double> pretrain_branch(QFormer& qformer, Branch branch, const MixSpec& mix, const PretrainPlan& plan,
                                    const TrainingData& data, std::uint64_t seed, const LogSink& log) {
  const ParamList trainable = qformer.params_in(kPretrainGroups);
  const ParamList untouched = params_outside(qformer, kPretrainGroups);
  const std::string untouched_before = params_fingerprint(untouched);

  BatchSampler sampler(mix, train_pools(data), static_cast<std::size_t>(plan.batch_size));
  AdamW optimizer(plan.optimizer);
  Rng itm_rng(derive_seed(seed, std::string(branch_name(branch)) + ".itm"));
  const std::size_t per_epoch = sampler.epoch_batches();
  std::vector<double> epoch_losses;
  long long step = 0;
  for (int epoch = 1; epoch <= plan.epochs; ++epoch) {
    double sum = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
      const Batch batch = sampler.next();
      std::vector<PairRef> pairs;
      StepLog entry{"pretrain", std::string(branch_name(branch)), step, epoch, {}, {}};
      for (const SampleRef& ref : batch) {
        const EncodedDataset& d = data.dataset(ref.dataset);
        pairs.push_back(PairRef{&branch_features(d, branch, ref.index), &d.captions[ref.index]});
        ++entry.batch_mix[ref.dataset];
      }
      zero_grads(trainable);
      QFormerGraph graph(qformer);
      const ag::Var itc = itc_loss(graph, pairs);
      const ag::Var itm = itm_loss(graph, pairs, itm_rng);
      const ag::Var itg = itg_loss(graph, pairs);
      const ag::Var total = ag::add(ag::add(itc, itm), itg);
      if (!std::isfinite(total.item()))
        throw NumericError("non-finite pretrain loss in " + std::string(branch_name(branch)) + " branch at step " +
                           std::to_string(step));
      ag::backward(total);
      optimizer.step(trainable);
      qformer.clamp_temperature();
      entry.losses = {{"itc", itc.item()}, {"itm", itm.item()}, {"itg", itg.item()}, {"total", total.item()}};
      if (log) log(entry);
      sum += total.item();
    }
    epoch_losses.push_back(sum / static_cast<double>(per_epoch));
  }
  if (params_fingerprint(untouched) != untouched_before)
    throw ArtifactError("pretraining changed parameters outside the trainable set of the " +
                        std::string(branch_name(branch)) + " branch");
  return epoch_losses;
}

PretrainResult run_pretrain(const RunConfig& cfg, const TrainingData& data, CaptionModel& model, const LogSink& log) {
  PretrainResult result;
  const std::map<std::string, std::string> encoders_before = data.encoder_fingerprints;
  for (const Branch b : {Branch::kClip, Branch::kSam}) {
    QFormer* q = model.branch(b);
    if (!q) continue;
    const std::string& mix_name = b == Branch::kClip ? cfg.pretrain.clip_mix : cfg.pretrain.sam_mix;
    const MixSpec mix = branch_mix(mix_name, data, derive_seed(cfg.seed, std::string(branch_name(b)) + ".mix"));
    result.epoch_losses[std::string(branch_name(b))] = pretrain_branch(*q, b, mix, cfg.pretrain, data, cfg.seed, log);
  }
  const std::map<std::string, std::string> encoders_after = {
      {"encoder.general", encoder_fingerprint(cfg.general_encoder)},
      {"encoder.detail", encoder_fingerprint(cfg.detail_encoder)}};
  if (encoders_after != encoders_before) throw ArtifactError("encoder fingerprint drift during pretraining");

  CheckpointState& ck = result.checkpoint;
  ck.stage = "pretrain";
  ck.config_json = dump_config(cfg);
  add_parameters(ck, model.params());
  ck.fingerprints = encoders_after;
  ck.step = 0;
  for (const auto& [branch, losses] : result.epoch_losses)
    for (std::size_t e = 0; e < losses.size(); ++e) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.9g", losses[e]);
      ck.metadata[branch + ".epoch" + std::to_string(e + 1) + ".loss"] = buf;
    }
  return result;
}

PrefixEmbedding caption_prefix(QFormerGraph* clip, QFormerGraph* sam, LmGraph& lm, const FeatureSeq& general,
                               const FeatureSeq& detail, std::span<const int> prompt) {
  ag::Var clip_rows;
  ag::Var sam_rows;
  if (clip) clip_rows = project_queries(*clip, qformer_forward(*clip, general, {}, MaskMode::kCaption).query_states);
  if (sam) sam_rows = project_queries(*sam, qformer_forward(*sam, detail, {}, MaskMode::kCaption).query_states);
  return build_prefix(lm, clip_rows, sam_rows, prompt);
}

FinetuneSession::FinetuneSession(const RunConfig& cfg, const TrainingData& data, CaptionModel& model, FrozenLM& lm,
                                 std::uint64_t seed)
    : cfg_(&cfg),
      data_(&data),
      model_(&model),
      lm_(&lm),
      prompt_(data.prompt_ids(cfg.prompt)),
      trainable_(model.finetune_params()),
      optimizer_(cfg.finetune.optimizer),
      sampler_(MixSpec{cfg.finetune.mix, derive_seed(seed, "finetune.mix")}, train_pools(data),
               static_cast<std::size_t>(cfg.finetune.batch_size)) {
  if (!lm.frozen()) throw ConfigError("fine-tuning requires a frozen language model");
  total_steps_ = static_cast<long long>(cfg.finetune.epochs) * static_cast<long long>(sampler_.epoch_batches());
  frozen_at_start_ = frozen_fingerprints();
}

std::map<std::string, std::string> FinetuneSession::frozen_fingerprints() const {
  std::map<std::string, std::string> out = data_->encoder_fingerprints;
  out["lm"] = lm_->fingerprint();
  for (QFormer* q : {model_->clip.get(), model_->sam.get()})
    if (q) out[q->branch() + ".frozen"] = params_fingerprint(params_outside(*q, kFinetuneGroups));
  return out;
}

void FinetuneSession::check_frozen() const {
  const auto now = frozen_fingerprints();
  for (const auto& [name, digest] : frozen_at_start_)
    if (now.at(name) != digest) throw ArtifactError("frozen parameter drift detected in '" + name + "'");
}

double FinetuneSession::step(const LogSink& log) {
  if (finished()) throw ConfigError("fine-tuning already finished");
  const Batch batch = sampler_.next();
  const long long step = steps_done();
  const int epoch = static_cast<int>(step / static_cast<long long>(sampler_.epoch_batches())) + 1;
  StepLog entry{"finetune", "", step, epoch, {}, {}};

  zero_grads(trainable_);
  std::unique_ptr<QFormerGraph> clip = model_->clip ? std::make_unique<QFormerGraph>(*model_->clip) : nullptr;
  std::unique_ptr<QFormerGraph> sam = model_->sam ? std::make_unique<QFormerGraph>(*model_->sam) : nullptr;
  LmGraph lm(*lm_);
  ag::Var total;
  for (const SampleRef& ref : batch) {
    const EncodedDataset& d = data_->dataset(ref.dataset);
    const PrefixEmbedding prefix =
        caption_prefix(clip.get(), sam.get(), lm, d.general[ref.index], d.detail[ref.index], prompt_);
    const ag::Var loss = lm_loss(lm, prefix, d.captions[ref.index]);
    total = total.defined() ? ag::add(total, loss) : loss;
    ++entry.batch_mix[ref.dataset];
  }
  total = ag::scale(total, 1.0 / static_cast<double>(batch.size()));
  const double value = total.item();
  if (!std::isfinite(value)) throw NumericError("non-finite finetune loss at step " + std::to_string(step));
  ag::backward(total);
  optimizer_.step(trainable_);
  entry.losses = {{"lm", value}, {"total", value}};
  if (log) log(entry);
  epoch_sum_ += value;
  return value;
}

std::vector<double> FinetuneSession::run(const LogSink& log) {
  std::vector<double> epochs;
  const auto per_epoch = static_cast<long long>(sampler_.epoch_batches());
  while (!finished()) {
    step(log);
    if (steps_done() % per_epoch == 0) {
      epochs.push_back(epoch_sum_ / static_cast<double>(per_epoch));
      epoch_sum_ = 0.0;
    }
  }
  check_frozen();
  return epochs;
}

CheckpointState FinetuneSession::snapshot(const std::string& config_json) const {
  check_frozen();
  CheckpointState ck;
  ck.stage = "finetune";
  ck.config_json = config_json;
  add_parameters(ck, model_->params());
  for (const auto& [name, m] : optimizer_.moments()) {
    ck.tensors.push_back(NamedTensor{"adam.first." + name, m.first});
    ck.tensors.push_back(NamedTensor{"adam.second." + name, m.second});
  }
  ck.fingerprints = frozen_at_start_;
  ck.step = steps_done();
  ck.rng_states["finetune.sampler"] = sampler_.state();
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", epoch_sum_);
  ck.metadata["epoch_loss_sum"] = buf;
  ck.metadata["total_steps"] = std::to_string(total_steps_);
  return ck;
}

void FinetuneSession::restore(const CheckpointState& state) {
  if (state.stage != "finetune") throw ArtifactError("expected a finetune checkpoint, got '" + state.stage + "'");
  std::map<std::string, std::string> external = data_->encoder_fingerprints;
  external["lm"] = lm_->fingerprint();
  verify_fingerprints(state, external);
  restore_parameters(state, model_->params());
  std::map<std::string, AdamW::Moments> moments;
  for (const Parameter* p : trainable_) {
    const std::string first = "adam.first." + p->name;
    if (!state.has_tensor(first)) continue;
    moments[p->name] = AdamW::Moments{state.tensor(first), state.tensor("adam.second." + p->name)};
  }
  optimizer_.restore(state.step, std::move(moments));
  sampler_.restore(state.rng_states.at("finetune.sampler"));
  epoch_sum_ = std::stod(state.metadata.at("epoch_loss_sum"));
  frozen_at_start_ = frozen_fingerprints();
}

std::vector<Prediction> generate_predictions(CaptionModel& model, FrozenLM& lm, const TrainingData& data,
                                             const std::string& dataset, Split split, const std::string& prompt,
                                             const DecodeOptions& options) {
  const EncodedDataset& d = data.dataset(dataset);
  const std::vector<int> prompt_ids = data.prompt_ids(prompt);
  std::unique_ptr<QFormerGraph> clip = model.clip ? std::make_unique<QFormerGraph>(*model.clip) : nullptr;
  std::unique_ptr<QFormerGraph> sam = model.sam ? std::make_unique<QFormerGraph>(*model.sam) : nullptr;
  LmGraph graph(lm);
  std::vector<Prediction> out;
  for (const std::size_t i : d.manifest.indices(split)) {
    const PrefixEmbedding prefix = caption_prefix(clip.get(), sam.get(), graph, d.general[i], d.detail[i], prompt_ids);
    out.push_back(Prediction{d.manifest.samples[i].image_ref, generate(graph, prefix, options, data.tokenizer)});
  }
  return out;
}

void save_predictions(const fs::path& path, const std::vector<Prediction>& predictions) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArtifactError("cannot write predictions " + path.string());
  for (const auto& p : predictions) {
    json j;
    j["image"] = p.image;
    j["prediction"] = p.prediction;
    out << j.dump() << '\n';
  }
}

std::vector<Prediction> load_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("missing predictions " + path.string() + " (run generate first)");
  std::vector<Prediction> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      out.push_back(Prediction{j.at("image").get<std::string>(), j.at("prediction").get<std::string>()});
    } catch (const json::exception&) {
      throw DataError("malformed prediction record at line " + std::to_string(line_no) + " of " + path.string());
    }
  }
  return out;
}

std::vector<EvalPair> pair_with_references(const std::vector<Prediction>& predictions, const Manifest& manifest) {
  std::map<std::string, std::vector<std::string>> refs;
  for (const auto& s : manifest.samples) refs[s.image_ref].push_back(s.caption);
  std::vector<EvalPair> pairs;
  for (const auto& p : predictions) {
    const auto it = refs.find(p.image);
    if (it == refs.end()) throw DataError("prediction for unknown image '" + p.image + "'");
    pairs.push_back(EvalPair{p.image, p.prediction, it->second});
  }
  return pairs;
}

LmConfig resolved_lm_config(const RunConfig& cfg, int vocab) {
  LmConfig lm = cfg.lm;
  lm.vocab = vocab;
  return lm;
}

FrozenLM train_language_model(const RunConfig& cfg, const TrainingData& data) {
  std::vector<std::vector<int>> captions;
  for (const auto& [name, d] : data.datasets)
    for (const std::size_t i : d.manifest.indices(Split::kTrain)) captions.push_back(d.captions[i]);
  return pretrain_toy_lm(captions, data.prompt_ids(cfg.prompt),
                         resolved_lm_config(cfg, static_cast<int>(data.tokenizer.size())), cfg.lm_pretrain);
}

void save_language_model(const fs::path& dir, const FrozenLM& lm, const std::string& config_json) {
  CheckpointState ck;
  ck.stage = "lm";
  ck.config_json = config_json;
  lm.visit(ConstParamVisitor([&](const Parameter& p) { ck.tensors.push_back(NamedTensor{p.name, p.value}); }));
  ck.fingerprints["lm"] = lm.fingerprint();
  save_checkpoint(dir, ck);
}

FrozenLM load_language_model(const fs::path& dir, const RunConfig& cfg, int vocab) {
  const CheckpointState ck = load_checkpoint(dir);
  if (ck.stage != "lm") throw ArtifactError("expected a language-model checkpoint in " + dir.string());
  FrozenLM lm(resolved_lm_config(cfg, vocab));
  restore_parameters(ck, lm.params());
  lm.freeze();
  verify_fingerprints(ck, {{"lm", lm.fingerprint()}});
  return lm;
}

CaptionModel load_caption_model(const CheckpointState& state, const RunConfig& cfg, int vocab) {
  const bool clip = state.has_tensor("clip.queries");
  const bool sam = state.has_tensor("sam.queries");
  CaptionModel model = make_caption_model(cfg, vocab, clip, sam, cfg.seed);
  restore_parameters(state, model.params());
  return model;
}

std::vector<AblationCell> default_ablation_grid() {
  return {
      {"BLIP2 (G)", "G", "-"},
      {"BLIP2 (G+M)", "G+M", "-"},
      {"SAM-BLIP2 (G+M)", "-", "G+M"},
      {"MSMedCap (G, G)", "G", "G"},
      {"MSMedCap (G+M, G)", "G+M", "G"},
      {"MSMedCap (G+M, G+M)", "G+M", "G+M"},
      {"MSMedCap (G, G+M)", "G", "G+M"},
  };
}

AblationCell parse_ablation_cell(const std::string& name) {
  const std::string compact = remove_spaces(name);
  const auto open = compact.find('(');
  if (open == std::string::npos || compact.back() != ')') throw ConfigError("unrecognised ablation cell '" + name + "'");
  const std::string model = compact.substr(0, open);
  const std::string args = compact.substr(open + 1, compact.size() - open - 2);
  const auto comma = args.find(',');
  auto check = [&](const std::string& mix) {
    if (mix != "G" && mix != "G+M") throw ConfigError("ablation cell '" + name + "' uses unknown mix '" + mix + "'");
    return mix;
  };
  if (model == "MSMedCap" && comma != std::string::npos) {
    const std::string a = check(args.substr(0, comma));
    const std::string b = check(args.substr(comma + 1));
    return {"MSMedCap (" + a + ", " + b + ")", a, b};
  }
  if (comma == std::string::npos) {
    const std::string a = check(args);
    if (model == "BLIP2") return {"BLIP2 (" + a + ")", a, "-"};
    if (model == "SAM-BLIP2") return {"SAM-BLIP2 (" + a + ")", "-", a};
  }
  throw ConfigError("unrecognised ablation cell '" + name + "'");
}

std::vector<AblationCell> select_ablation_cells(const std::vector<std::string>& names) {
  if (names.empty()) return default_ablation_grid();
  std::vector<AblationCell> cells;
  std::set<std::string> seen;
  for (const auto& n : names) {
    AblationCell cell = parse_ablation_cell(n);
    if (!seen.insert(cell.name).second) throw ConfigError("duplicate ablation cell '" + cell.name + "'");
    cells.push_back(std::move(cell));
  }
  return cells;
}

RawScores median_scores(const std::vector<RawScores>& runs) {
  if (runs.empty()) throw DataError("no scores to aggregate");
  auto median = [&](auto field) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.*field);
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  RawScores m;
  m.bleu1 = median(&RawScores::bleu1);
  m.bleu2 = median(&RawScores::bleu2);
  m.bleu3 = median(&RawScores::bleu3);
  m.meteor = median(&RawScores::meteor);
  m.rouge_l = median(&RawScores::rouge_l);
  m.cider = median(&RawScores::cider);
  return m;
}

std::vector<CellResult> run_ablation(const RunConfig& cfg, const TrainingData& data, FrozenLM& lm,
                                     const std::vector<AblationCell>& cells, const std::vector<std::uint64_t>& seeds,
                                     const fs::path& out_dir, const LogSink& log) {
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  std::set<std::string> names;
  for (const auto& c : cells)
    if (!names.insert(c.name).second) throw ConfigError("duplicate ablation cell '" + c.name + "'");

  // A branch's pre-training depends only on (branch, mix, seed), so cells sharing it reuse the result.
  std::map<std::tuple<std::string, std::string, std::uint64_t>, std::vector<NamedTensor>> pretrained;
  const int vocab = static_cast<int>(data.tokenizer.size());

  std::vector<CellResult> results;
  for (const AblationCell& cell : cells) {
    CellResult result{cell, {}, {}, {}};
    std::vector<RawScores> ok;
    for (const std::uint64_t seed : seeds) {
      SeedScores entry{seed, {}, {}};
      try {
        RunConfig run = cfg;
        run.seed = seed;
        run.pretrain.clip_mix = cell.clip_mix;
        run.pretrain.sam_mix = cell.sam_mix;
        CaptionModel model = make_caption_model(run, vocab, cell.clip_mix != "-", cell.sam_mix != "-", seed);
        for (const Branch b : {Branch::kClip, Branch::kSam}) {
          QFormer* q = model.branch(b);
          if (!q) continue;
          const std::string& mix = b == Branch::kClip ? cell.clip_mix : cell.sam_mix;
          const auto key = std::make_tuple(std::string(branch_name(b)), mix, seed);
          auto it = pretrained.find(key);
          if (it == pretrained.end()) {
            const MixSpec spec = branch_mix(mix, data, derive_seed(seed, std::string(branch_name(b)) + ".mix"));
            pretrain_branch(*q, b, spec, run.pretrain, data, seed, log);
            std::vector<NamedTensor> values;
            for (const Parameter* p : q->params()) values.push_back(NamedTensor{p->name, p->value});
            it = pretrained.emplace(key, std::move(values)).first;
          } else {
            const ParamList params = q->params();
            for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = it->second[i].value;
          }
        }
        FinetuneSession session(run, data, model, lm, seed);
        session.run(log);
        const auto predictions =
            generate_predictions(model, lm, data, "medical", Split::kTest, run.prompt, run.decode);
        const fs::path cell_dir = out_dir / slug(cell.name) / ("seed-" + std::to_string(seed));
        save_predictions(cell_dir / "predictions.jsonl", predictions);
        entry.scores = evaluate_all(pair_with_references(predictions, data.dataset("medical").manifest), run.bleu_mode);
        ok.push_back(*entry.scores);
      } catch (const Error& e) {
        entry.error = e.what();
      }
      result.seeds.push_back(std::move(entry));
    }
    if (ok.size() == seeds.size()) {
      result.median = median_scores(ok);
    } else {
      for (const auto& s : result.seeds)
        if (!s.error.empty()) {
          result.error = "seed " + std::to_string(s.seed) + ": " + s.error;
          break;
        }
    }
    results.push_back(std::move(result));
  }
  return results;
}

}  // namespace dualcap
