#pragma once

#include "dualcap/training.hpp"

#include "temp_dir.hpp"

#include <memory>

namespace dualcap::testing {

/// A shrunken corpus, its encoded data and a briefly trained frozen LM.
struct SmallRun {
  TempDir dir;
  RunConfig cfg;
  std::unique_ptr<ImageEncoder> general;
  std::unique_ptr<ImageEncoder> detail;
  std::unique_ptr<TrainingData> data;
  std::unique_ptr<FrozenLM> lm;

  explicit SmallRun(int train = 24, int test = 8) {
    cfg.corpus.general_train = train;
    cfg.corpus.medical_train = train;
    cfg.corpus.medical_test = test;
    cfg.qformer.hidden = 32;
    cfg.qformer.layers = 1;
    cfg.qformer.queries = 4;
    cfg.lm.width = 32;
    cfg.lm.layers = 1;
    cfg.lm_pretrain.steps = 40;
    cfg.pretrain.epochs = 3;
    cfg.finetune.epochs = 2;
    generate_synthetic_corpus(cfg.corpus, cfg.seed, dir.path());
    auto manifests = load_corpus_manifests(dir.path());
    Tokenizer tok = build_caption_tokenizer(manifests, cfg.tokenizer);
    general = std::make_unique<ImageEncoder>(cfg.general_encoder);
    detail = std::make_unique<ImageEncoder>(cfg.detail_encoder);
    data = std::make_unique<TrainingData>(
        prepare_training_data(std::move(manifests), std::move(tok), cfg.tokenizer, *general, *detail));
    lm = std::make_unique<FrozenLM>(train_language_model(cfg, *data));
  }

  int vocab() const { return static_cast<int>(data->tokenizer.size()); }
};

}  // namespace dualcap::testing
