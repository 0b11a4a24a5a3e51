#include "dualcap/encoders.hpp"
#include "dualcap/lm.hpp"
#include "dualcap/metrics.hpp"
#include "dualcap/optimizer.hpp"
#include "dualcap/qformer.hpp"
#include "dualcap/synthetic.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace dualcap;

RgbImage medical_image() {
  SyntheticCorpusConfig cfg;
  Rng rng(1);
  return render_scene(cfg, sample_medical_scene(cfg, rng));
}

void BM_EncodeGeneral(benchmark::State& state) {
  const ImageEncoder enc(default_general_spec());
  const RgbImage img = medical_image();
  for (auto _ : state) benchmark::DoNotOptimize(enc.encode(img).values.data());
}
BENCHMARK(BM_EncodeGeneral)->Unit(benchmark::kMillisecond);

void BM_EncodeDetail(benchmark::State& state) {
  const ImageEncoder enc(default_detail_spec());
  const RgbImage img = medical_image();
  for (auto _ : state) benchmark::DoNotOptimize(enc.encode(img).values.data());
}
BENCHMARK(BM_EncodeDetail)->Unit(benchmark::kMicrosecond);

QFormerConfig detail_qformer() {
  QFormerConfig c;
  c.vocab = 60;
  c.image_dims = 48;
  c.seed = 3;
  return c;
}

void BM_QFormerCaptionForward(benchmark::State& state) {
  QFormer q("sam", detail_qformer());
  Rng rng(2);
  const FeatureSeq image{random_normal(rng, 64, 48, 1.0)};
  for (auto _ : state) {
    QFormerGraph g(q);
    benchmark::DoNotOptimize(project_queries(g, qformer_forward(g, image, {}, MaskMode::kCaption).query_states).value().data());
  }
}
BENCHMARK(BM_QFormerCaptionForward)->Unit(benchmark::kMicrosecond);

// One stage-1 optimizer step (ITC + ITM + ITG) at the given batch size.
void BM_PretrainStep(benchmark::State& state) {
  QFormer q("sam", detail_qformer());
  const auto batch_size = static_cast<int>(state.range(0));
  Rng rng(4);
  std::vector<FeatureSeq> images;
  std::vector<std::vector<int>> captions;
  for (int i = 0; i < batch_size; ++i) {
    images.push_back(FeatureSeq{random_normal(rng, 64, 48, 1.0)});
    std::vector<int> ids{kBos};
    for (int t = 0; t < 10; ++t) ids.push_back(kNumSpecials + static_cast<int>(uniform_index(rng, 55)));
    ids.push_back(kEos);
    captions.push_back(ids);
  }
  std::vector<PairRef> pairs;
  for (int i = 0; i < batch_size; ++i) pairs.push_back(PairRef{&images[i], &captions[i]});
  const std::vector<std::string_view> groups{"queries", "text_embed", "blocks", "heads"};
  const ParamList params = q.params_in(groups);
  AdamW opt(OptimizerConfig{});
  Rng negatives(5);
  for (auto _ : state) {
    zero_grads(params);
    QFormerGraph g(q);
    const ag::Var loss = ag::add(ag::add(itc_loss(g, pairs), itm_loss(g, pairs, negatives)), itg_loss(g, pairs));
    ag::backward(loss);
    opt.step(params);
  }
}
BENCHMARK(BM_PretrainStep)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Decode(benchmark::State& state) {
  LmConfig c;
  c.vocab = 60;
  FrozenLM lm(c);
  lm.freeze();
  Rng rng(6);
  const Matrix rows = random_normal(rng, 16, 64, 1.0);
  DecodeOptions o;
  o.strategy = state.range(0) == 1 ? DecodeOptions::Strategy::kGreedy : DecodeOptions::Strategy::kBeam;
  o.beam_size = static_cast<int>(state.range(0));
  o.max_len = 16;
  for (auto _ : state) {
    LmGraph g(lm);
    const PrefixEmbedding prefix = build_prefix(g, ag::constant(rows), ag::Var(), std::vector<int>{5, 6, 7});
    benchmark::DoNotOptimize(generate_ids(g, prefix, o));
  }
}
BENCHMARK(BM_Decode)->Arg(1)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_EvaluateAll(benchmark::State& state) {
  SyntheticCorpusConfig cfg;
  Rng rng(7);
  std::vector<EvalPair> pairs;
  for (int i = 0; i < 50; ++i) {
    const auto cand = caption_scene(cfg, sample_medical_scene(cfg, rng), Domain::kMedical);
    const auto ref = caption_scene(cfg, sample_medical_scene(cfg, rng), Domain::kMedical);
    pairs.push_back(EvalPair{std::to_string(i), cand, {ref}});
  }
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_all(pairs));
}
BENCHMARK(BM_EvaluateAll)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
