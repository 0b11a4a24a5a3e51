#include "dualcap/pipeline.hpp"

#include "dualcap/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace dualcap {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw ArtifactError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("missing " + path.string());
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void require(const fs::path& path, std::string_view what, std::string_view producer) {
  if (!fs::exists(path))
    throw MissingArtifactError("missing " + std::string(what) + " " + path.string() + " (run " +
                               std::string(producer) + " first)");
}

class JsonlLog {
 public:
  JsonlLog(const fs::path& path, bool append) {
    fs::create_directories(path.parent_path());
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw ArtifactError("cannot write log " + path.string());
  }
  LogSink sink() {
    return [this](const StepLog& log) { out_ << to_json_line(log) << '\n'; };
  }

 private:
  std::ofstream out_;
};

json raw_json(const RawScores& r) {
  return {{"bleu1", r.bleu1}, {"bleu2", r.bleu2}, {"bleu3", r.bleu3},
          {"meteor", r.meteor}, {"rouge_l", r.rouge_l}, {"cider", r.cider}};
}

RawScores raw_from_json(const json& j) {
  RawScores r;
  r.bleu1 = j.at("bleu1").get<double>();
  r.bleu2 = j.at("bleu2").get<double>();
  r.bleu3 = j.at("bleu3").get<double>();
  r.meteor = j.at("meteor").get<double>();
  r.rouge_l = j.at("rouge_l").get<double>();
  r.cider = j.at("cider").get<double>();
  return r;
}

json scaled_json(const RawScores& r) {
  json out = json::object();
  for (const auto& c : scale_report(r).columns) {
    if (c.scaled)
      out[std::string(c.name)] = *c.scaled;
    else
      out[std::string(c.name)] = nullptr;
  }
  return out;
}

std::vector<int> prompt_of(const TrainingData& data, const RunConfig& cfg) { return data.prompt_ids(cfg.prompt); }

std::vector<std::vector<int>> split_captions(const TrainingData& data, const std::string& dataset, Split split) {
  std::vector<std::vector<int>> out;
  const EncodedDataset& d = data.dataset(dataset);
  for (const std::size_t i : d.manifest.indices(split)) out.push_back(d.captions[i]);
  return out;
}

}  // namespace

fs::path RunLayout::log(std::string_view stage) const { return root / "logs" / (std::string(stage) + ".jsonl"); }

fs::path RunLayout::config_snapshot(std::string_view stage) const {
  return root / "config" / (std::string(stage) + ".json");
}

RunLayout run_layout(const RunConfig& cfg, const fs::path& root) { return RunLayout{root, data_path(cfg, root)}; }

void write_config_snapshot(const RunLayout& layout, std::string_view stage, const RunConfig& cfg) {
  write_text(layout.config_snapshot(stage), dump_config(cfg));
}

TrainingData load_run_data(const RunConfig& cfg, const RunLayout& layout) {
  auto manifests = load_corpus_manifests(layout.data);
  require(layout.tokenizer(), "tokenizer", "pretrain");
  Tokenizer tokenizer = Tokenizer::load(layout.tokenizer());
  const ImageEncoder general(cfg.general_encoder);
  const ImageEncoder detail(cfg.detail_encoder);
  return prepare_training_data(std::move(manifests), std::move(tokenizer), cfg.tokenizer, general, detail);
}

GenDataSummary stage_gen_data(const RunConfig& cfg, const RunLayout& layout) {
  write_config_snapshot(layout, "gen-data", cfg);
  const SyntheticCorpus corpus = generate_synthetic_corpus(cfg.corpus, cfg.seed, layout.data);
  GenDataSummary summary;
  for (const Manifest* m : {&corpus.general, &corpus.medical})
    for (const auto& [key, n] : m->counts()) summary.counts[key] += n;
  return summary;
}

PretrainSummary stage_pretrain(const RunConfig& cfg, const RunLayout& layout) {
  write_config_snapshot(layout, "pretrain", cfg);
  auto manifests = load_corpus_manifests(layout.data);
  Tokenizer tokenizer = build_caption_tokenizer(manifests, cfg.tokenizer);
  tokenizer.save(layout.tokenizer());
  const ImageEncoder general(cfg.general_encoder);
  const ImageEncoder detail(cfg.detail_encoder);
  const TrainingData data =
      prepare_training_data(std::move(manifests), std::move(tokenizer), cfg.tokenizer, general, detail);

  PretrainSummary summary;
  FrozenLM lm = train_language_model(cfg, data);
  save_language_model(layout.lm(), lm, dump_config(cfg));
  const auto held_out = split_captions(data, "medical", Split::kTest);
  if (!held_out.empty()) summary.lm_perplexity = perplexity(lm, held_out, prompt_of(data, cfg));

  JsonlLog log(layout.log("pretrain"), false);
  CaptionModel model = make_caption_model(cfg, static_cast<int>(data.tokenizer.size()), cfg.pretrain.clip_mix != "-",
                                          cfg.pretrain.sam_mix != "-", cfg.seed);
  PretrainResult result = run_pretrain(cfg, data, model, log.sink());
  result.checkpoint.fingerprints["lm"] = lm.fingerprint();
  save_checkpoint(layout.pretrain(), result.checkpoint);
  summary.epoch_losses = result.epoch_losses;
  return summary;
}

FinetuneSummary stage_finetune(const RunConfig& cfg, const RunLayout& layout, bool resume) {
  write_config_snapshot(layout, "finetune", cfg);
  require(layout.pretrain(), "pretrain checkpoint", "pretrain");
  require(layout.lm(), "language model", "pretrain");
  const TrainingData data = load_run_data(cfg, layout);
  const int vocab = static_cast<int>(data.tokenizer.size());
  FrozenLM lm = load_language_model(layout.lm(), cfg, vocab);

  const bool resuming = resume && fs::exists(layout.finetune());
  const CheckpointState start = load_checkpoint(resuming ? layout.finetune() : layout.pretrain());
  std::map<std::string, std::string> live = data.encoder_fingerprints;
  live["lm"] = lm.fingerprint();
  verify_fingerprints(start, live);
  CaptionModel model = load_caption_model(start, cfg, vocab);

  FinetuneSession session(cfg, data, model, lm, cfg.seed);
  FinetuneSummary summary;
  if (resuming) {
    session.restore(start);
    summary.resumed_from = session.steps_done();
  }
  JsonlLog log(layout.log("finetune"), resuming);
  const auto per_epoch = static_cast<long long>(session.epoch_batches());
  const std::string config_json = dump_config(cfg);
  double sum = 0.0;
  while (!session.finished()) {
    sum += session.step(log.sink());
    if (session.steps_done() % per_epoch == 0) {
      summary.epoch_losses.push_back(sum / static_cast<double>(per_epoch));
      sum = 0.0;
      save_checkpoint(layout.finetune(), session.snapshot(config_json));
    }
  }
  if (!fs::exists(layout.finetune())) save_checkpoint(layout.finetune(), session.snapshot(config_json));
  summary.steps = session.steps_done();
  return summary;
}

std::vector<Prediction> stage_generate(const RunConfig& cfg, const RunLayout& layout, const std::string& dataset,
                                       Split split, const fs::path& out) {
  write_config_snapshot(layout, "generate", cfg);
  require(layout.finetune(), "finetune checkpoint", "finetune");
  require(layout.lm(), "language model", "pretrain");
  const TrainingData data = load_run_data(cfg, layout);
  const int vocab = static_cast<int>(data.tokenizer.size());
  FrozenLM lm = load_language_model(layout.lm(), cfg, vocab);
  const CheckpointState state = load_checkpoint(layout.finetune());
  std::map<std::string, std::string> live = data.encoder_fingerprints;
  live["lm"] = lm.fingerprint();
  verify_fingerprints(state, live);
  CaptionModel model = load_caption_model(state, cfg, vocab);
  auto predictions = generate_predictions(model, lm, data, dataset, split, cfg.prompt, cfg.decode);
  save_predictions(out, predictions);
  return predictions;
}

std::string evaluation_json(const RawScores& raw, const std::string& dataset, std::size_t pairs, BleuMode mode) {
  json j;
  j["dataset"] = dataset;
  j["pairs"] = pairs;
  j["bleu_mode"] = mode == BleuMode::kCorpus ? "corpus" : "sentence";
  j["raw"] = raw_json(raw);
  j["scaled"] = scaled_json(raw);
  return j.dump(2) + "\n";
}

EvaluateSummary stage_evaluate(const RunConfig& cfg, const RunLayout& layout, const fs::path& predictions,
                               const std::string& dataset) {
  write_config_snapshot(layout, "evaluate", cfg);
  const auto manifests = load_corpus_manifests(layout.data);
  const auto it = manifests.find(dataset);
  if (it == manifests.end()) throw DataError("unknown dataset '" + dataset + "'");
  const auto pairs = pair_with_references(load_predictions(predictions), it->second);
  EvaluateSummary summary;
  summary.raw = evaluate_all(pairs, cfg.bleu_mode);
  summary.pairs = pairs.size();
  summary.table = format_table({ReportRow{"MSMedCap", scale_report(summary.raw)}});
  write_text(layout.report_json(), evaluation_json(summary.raw, dataset, summary.pairs, cfg.bleu_mode));
  write_text(layout.report_txt(), summary.table);
  return summary;
}

std::vector<ReportRow> ablation_rows(const std::vector<CellResult>& cells) {
  std::vector<ReportRow> rows;
  for (const auto& c : cells)
    rows.push_back(ReportRow{c.cell.name, c.median ? std::optional(scale_report(*c.median)) : std::nullopt});
  return rows;
}

std::string ablation_json(const std::vector<CellResult>& cells, const std::vector<std::uint64_t>& seeds) {
  json j;
  j["seeds"] = seeds;
  j["cells"] = json::array();
  for (const auto& c : cells) {
    json cell;
    cell["name"] = c.cell.name;
    cell["clip_mix"] = c.cell.clip_mix;
    cell["sam_mix"] = c.cell.sam_mix;
    cell["status"] = c.median ? "ok" : "failed";
    if (!c.error.empty()) cell["error"] = c.error;
    cell["per_seed"] = json::array();
    for (const auto& s : c.seeds) {
      json entry{{"seed", s.seed}};
      if (s.scores)
        entry["raw"] = raw_json(*s.scores);
      else
        entry["error"] = s.error;
      cell["per_seed"].push_back(entry);
    }
    if (c.median) {
      cell["median"] = raw_json(*c.median);
      cell["median_scaled"] = scaled_json(*c.median);
    }
    j["cells"].push_back(cell);
  }
  return j.dump(2) + "\n";
}

AblateSummary stage_ablate(const RunConfig& cfg, const RunLayout& layout, const std::vector<AblationCell>& cells,
                           const std::vector<std::uint64_t>& seeds) {
  write_config_snapshot(layout, "ablate", cfg);
  auto manifests = load_corpus_manifests(layout.data);
  Tokenizer tokenizer = fs::exists(layout.tokenizer()) ? Tokenizer::load(layout.tokenizer())
                                                       : build_caption_tokenizer(manifests, cfg.tokenizer);
  if (!fs::exists(layout.tokenizer())) tokenizer.save(layout.tokenizer());
  const ImageEncoder general(cfg.general_encoder);
  const ImageEncoder detail(cfg.detail_encoder);
  const TrainingData data =
      prepare_training_data(std::move(manifests), std::move(tokenizer), cfg.tokenizer, general, detail);
  const int vocab = static_cast<int>(data.tokenizer.size());
  FrozenLM lm = fs::exists(layout.lm()) ? load_language_model(layout.lm(), cfg, vocab) : train_language_model(cfg, data);
  if (!fs::exists(layout.lm())) save_language_model(layout.lm(), lm, dump_config(cfg));

  JsonlLog log(layout.log("ablate"), false);
  AblateSummary summary;
  summary.cells = run_ablation(cfg, data, lm, cells, seeds, layout.ablation_dir(), log.sink());
  summary.table = format_table(ablation_rows(summary.cells));
  write_text(layout.ablation_dir() / "ablation.json", ablation_json(summary.cells, seeds));
  write_text(layout.ablation_dir() / "ablation.txt", summary.table);
  return summary;
}

std::string stage_report(const RunLayout& layout) {
  std::vector<ReportRow> rows;
  const fs::path ablation = layout.ablation_dir() / "ablation.json";
  const bool have_report = fs::exists(layout.report_json());
  const bool have_ablation = fs::exists(ablation);
  if (!have_report && !have_ablation)
    throw MissingArtifactError("missing " + layout.report_json().string() + " and " + ablation.string() +
                               " (run evaluate or ablate first)");
  try {
    if (have_report) {
      const json j = json::parse(read_text(layout.report_json()));
      rows.push_back(ReportRow{"MSMedCap", scale_report(raw_from_json(j.at("raw")))});
    }
    if (have_ablation) {
      const json j = json::parse(read_text(ablation));
      for (const auto& cell : j.at("cells")) {
        ReportRow row{cell.at("name").get<std::string>(), std::nullopt};
        if (cell.contains("median")) row.scores = scale_report(raw_from_json(cell.at("median")));
        rows.push_back(std::move(row));
      }
    }
  } catch (const json::exception& e) {
    throw ArtifactError(std::string("malformed report json: ") + e.what());
  }
  const std::string table = format_table(rows);
  write_text(layout.root / "table.txt", table);
  return table;
}

}  // namespace dualcap
