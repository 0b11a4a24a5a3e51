#include "dualcap/encoders.hpp"
#include "dualcap/errors.hpp"
#include "dualcap/manifest.hpp"
#include "dualcap/sampler.hpp"
#include "dualcap/synthetic.hpp"
#include "dualcap/tokenizer.hpp"

#include "temp_dir.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

namespace dualcap {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

TEST(Tokenizer, VocabularyFromCorpus) {
  const std::vector<std::string> corpus{"a b", "a c"};
  const Tokenizer t = Tokenizer::build(corpus, 1);
  EXPECT_EQ(t.size(), 8u);
  EXPECT_EQ(t.words(), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(Tokenizer, MinFrequencyMapsRareWordsToUnk) {
  const std::vector<std::string> corpus{"a b", "a c"};
  const Tokenizer t = Tokenizer::build(corpus, 2);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.id("b"), kUnk);
  EXPECT_EQ(t.id("c"), kUnk);
  EXPECT_NE(t.id("a"), kUnk);
}

TEST(Tokenizer, EncodeFramesWithBosEos) {
  const std::vector<std::string> corpus{"a b", "a c"};
  const Tokenizer t = Tokenizer::build(corpus, 1);
  EXPECT_EQ(t.encode("a b"), (std::vector<int>{kBos, t.id("a"), t.id("b"), kEos}));
  EXPECT_EQ(kPad, 0);
}

TEST(Tokenizer, EmptyCorpusRejected) {
  const std::vector<std::string> corpus;
  EXPECT_THROW(Tokenizer::build(corpus, 1), DataError);
}

TEST(Tokenizer, RoundTripNormalizes) {
  const std::vector<std::string> corpus{"A Red circle, and a BLUE square."};
  const Tokenizer t = Tokenizer::build(corpus, 1);
  for (const std::string text : {"A Red circle, and a BLUE square.", "square and circle"})
    EXPECT_EQ(t.decode(t.encode(text)), normalize_text(text));
}

TEST(Tokenizer, TruncatesToMaxTokens) {
  const std::vector<std::string> corpus{"a b c d e f"};
  const Tokenizer t = Tokenizer::build(corpus, 1);
  const auto ids = t.encode("a b c d e f", 4);
  ASSERT_EQ(ids.size(), 4u);
  EXPECT_EQ(ids.front(), kBos);
  EXPECT_EQ(ids.back(), kEos);
}

TEST(Tokenizer, SaveLoadRoundTrip) {
  testing::TempDir dir;
  const std::vector<std::string> corpus{"a tiny cross mark", "a red circle"};
  const Tokenizer t = Tokenizer::build(corpus, 1);
  t.save(dir.path() / "tok.json");
  const Tokenizer u = Tokenizer::load(dir.path() / "tok.json");
  EXPECT_EQ(u.words(), t.words());
  EXPECT_EQ(u.encode("a tiny red mark"), t.encode("a tiny red mark"));
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << "\n";
}

TEST(Manifest, CountsPerDomainAndSplit) {
  testing::TempDir dir;
  write_lines(dir.path() / "m.jsonl",
              {R"({"image":"a.ppm","caption":"a b","domain":"general","split":"train"})",
               R"({"image":"b.ppm","caption":"a c","domain":"general","split":"train"})",
               R"({"image":"c.ppm","caption":"tiny mark","domain":"medical","split":"test"})"});
  const Manifest m = load_manifest(dir.path() / "m.jsonl", ImageCheck::kSkip);
  EXPECT_EQ(m.samples.size(), 3u);
  EXPECT_EQ(m.counts(), (std::map<std::string, std::size_t>{{"general/train", 2}, {"medical/test", 1}}));
  EXPECT_EQ(m.samples[2].caption, "tiny mark");
  EXPECT_EQ(m.source_name, "m");
}

TEST(Manifest, EmptyFileIsValid) {
  testing::TempDir dir;
  write_lines(dir.path() / "e.jsonl", {});
  EXPECT_TRUE(load_manifest(dir.path() / "e.jsonl", ImageCheck::kSkip).samples.empty());
}

TEST(Manifest, UnknownDomainNamesLine) {
  testing::TempDir dir;
  write_lines(dir.path() / "x.jsonl", {R"({"image":"a.ppm","caption":"a","domain":"general","split":"train"})",
                                       R"({"image":"a.ppm","caption":"a","domain":"xray","split":"train"})"});
  try {
    load_manifest(dir.path() / "x.jsonl", ImageCheck::kSkip);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("unknown domain"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Manifest, MalformedLineNamesLine) {
  testing::TempDir dir;
  write_lines(dir.path() / "x.jsonl", {"{not json"});
  try {
    load_manifest(dir.path() / "x.jsonl", ImageCheck::kSkip);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
  }
}

TEST(Manifest, UnknownSplitRejected) {
  testing::TempDir dir;
  write_lines(dir.path() / "x.jsonl", {R"({"image":"a.ppm","caption":"a","domain":"general","split":"val"})"});
  EXPECT_THROW(load_manifest(dir.path() / "x.jsonl", ImageCheck::kSkip), DataError);
}

TEST(Manifest, MissingImageRejectedWhenChecked) {
  testing::TempDir dir;
  write_lines(dir.path() / "x.jsonl", {R"({"image":"nope.ppm","caption":"a","domain":"general","split":"train"})"});
  EXPECT_THROW(load_manifest(dir.path() / "x.jsonl"), DataError);
}

SyntheticCorpusConfig small_corpus(int general, int medical) {
  SyntheticCorpusConfig cfg;
  cfg.general_train = general;
  cfg.medical_train = medical;
  cfg.medical_test = 0;
  return cfg;
}

TEST(Synthetic, DeterministicGivenSeed) {
  testing::TempDir a, b;
  const auto cfg = small_corpus(4, 4);
  generate_synthetic_corpus(cfg, 7, a.path());
  generate_synthetic_corpus(cfg, 7, b.path());
  for (const char* f : {"general.jsonl", "medical.jsonl"}) EXPECT_EQ(slurp(a.path() / f), slurp(b.path() / f));
  for (const auto& entry : fs::directory_iterator(a.path() / "images"))
    EXPECT_EQ(slurp(entry.path()), slurp(b.path() / "images" / entry.path().filename()));
}

TEST(Synthetic, CountsFilesAndLines) {
  testing::TempDir dir;
  const auto corpus = generate_synthetic_corpus(small_corpus(100, 100), 3, dir.path());
  std::size_t images = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path() / "images")) ++images;
  EXPECT_EQ(images, 200u);
  EXPECT_EQ(corpus.general.samples.size() + corpus.medical.samples.size(), 200u);
  const auto g = load_manifest(dir.path() / "general.jsonl");
  const auto m = load_manifest(dir.path() / "medical.jsonl");
  EXPECT_EQ(g.samples.size() + m.samples.size(), 200u);
}

TEST(Synthetic, MedicalCaptionsMentionMarks) {
  SyntheticCorpusConfig cfg;
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const auto scene = sample_medical_scene(cfg, rng);
    const auto words = split_words(caption_scene(cfg, scene, Domain::kMedical));
    bool found = false;
    for (const auto& mark : cfg.marks) found = found || std::find(words.begin(), words.end(), mark) != words.end();
    EXPECT_TRUE(found);
    EXPECT_GE(scene.marks.size(), 1u);
    EXPECT_LE(scene.marks.size(), 2u);
  }
}

TEST(Synthetic, GeneralCaptionsNameShapes) {
  SyntheticCorpusConfig cfg;
  Rng rng(12);
  const auto scene = sample_general_scene(cfg, rng);
  const std::string caption = caption_scene(cfg, scene, Domain::kGeneral);
  EXPECT_GE(scene.shapes.size(), 1u);
  EXPECT_LE(scene.shapes.size(), 3u);
  EXPECT_NE(caption.find(cfg.shapes[static_cast<std::size_t>(scene.shapes[0].kind)]), std::string::npos);
}

TEST(Synthetic, SmoothingErasesMarkPlacement) {
  // pairs of scenes with identical shapes and different marks look the same after smoothing
  SyntheticCorpusConfig cfg;
  Rng rng(21);
  int identical = 0;
  const int pairs = 200;
  for (int i = 0; i < pairs; ++i) {
    SyntheticScene a = sample_medical_scene(cfg, rng);
    SyntheticScene b = a;
    const auto candidates = mark_candidates(cfg, a.shapes, static_cast<int>(uniform_index(rng, 4)));
    if (!candidates.empty()) b.marks = {candidates[uniform_index(rng, candidates.size())]};
    b.marks[0].kind = static_cast<int>(uniform_index(rng, cfg.marks.size()));
    const RgbImage sa = median_smooth(render_scene(cfg, a), cfg.blur_kernel);
    const RgbImage sb = median_smooth(render_scene(cfg, b), cfg.blur_kernel);
    identical += sa.pixels == sb.pixels ? 1 : 0;
  }
  EXPECT_GE(identical, pairs * 99 / 100);
}

TEST(Synthetic, UnwritableDirectoryIsDataError) {
  testing::TempDir dir;
  std::ofstream(dir.path() / "file") << "x";
  EXPECT_THROW(generate_synthetic_corpus(small_corpus(1, 1), 1, dir.path() / "file" / "sub"), DataError);
}

std::map<std::string, std::vector<std::size_t>> pools(std::size_t g, std::size_t m) {
  std::map<std::string, std::vector<std::size_t>> p;
  for (std::size_t i = 0; i < g; ++i) p["general"].push_back(i);
  for (std::size_t i = 0; i < m; ++i) p["medical"].push_back(i);
  return p;
}

double medical_fraction(const MixSpec& mix, int draws) {
  BatchSampler s(mix, pools(50, 30), 10);
  int medical = 0;
  for (int i = 0; i < draws / 10; ++i)
    for (const auto& r : s.next()) medical += r.dataset == "medical" ? 1 : 0;
  return static_cast<double>(medical) / draws;
}

TEST(Sampler, DegenerateMixIsPure) {
  EXPECT_EQ(medical_fraction(MixSpec{{{"general", 1.0}, {"medical", 0.0}}, 3}, 2000), 0.0);
}

TEST(Sampler, EqualWeightsHalfMedical) {
  EXPECT_NEAR(medical_fraction(MixSpec{{{"general", 1.0}, {"medical", 1.0}}, 3}, 10000), 0.5, 0.02);
}

TEST(Sampler, ThreeToOneQuarterMedical) {
  EXPECT_NEAR(medical_fraction(MixSpec{{{"general", 3.0}, {"medical", 1.0}}, 4}, 10000), 0.25, 0.02);
}

TEST(Sampler, UniformWithinDataset) {
  BatchSampler s(MixSpec{{{"general", 1.0}}, 5}, pools(4, 0), 8);
  std::map<std::size_t, int> hits;
  for (int i = 0; i < 1000; ++i)
    for (const auto& r : s.next()) ++hits[r.index];
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(hits[i] / 8000.0, 0.25, 0.02);
}

TEST(Sampler, ReproducibleAndRestorable) {
  const MixSpec mix{{{"general", 2.0}, {"medical", 1.0}}, 17};
  BatchSampler a(mix, pools(10, 10), 4), b(mix, pools(10, 10), 4);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(a.next(), b.next());
  const std::string state = a.state();
  const Batch expected = a.next();
  BatchSampler c(mix, pools(10, 10), 4);
  c.restore(state);
  EXPECT_EQ(c.next(), expected);
}

TEST(Sampler, RejectsBadArguments) {
  EXPECT_THROW(BatchSampler(MixSpec{{{"general", 1.0}}, 1}, pools(4, 4), 1), ConfigError);
  EXPECT_THROW(BatchSampler(MixSpec{{{"general", 0.0}, {"medical", 0.0}}, 1}, pools(4, 4), 4), ConfigError);
  EXPECT_THROW(BatchSampler(MixSpec{{{"medical", 1.0}}, 1}, pools(4, 0), 4), DataError);
}

}  // namespace
}  // namespace dualcap
