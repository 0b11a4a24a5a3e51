#include "dualcap/errors.hpp"
#include "dualcap/metrics.hpp"

#include "metric_oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace dualcap {
namespace {

std::vector<EvalPair> one(const std::string& cand, const std::string& ref) { return {EvalPair{"x", cand, {ref}}}; }

std::vector<std::string> words(std::string_view s) { return split_words(s); }

TEST(Bleu, IdentityScoresOne) {
  const auto p = one("a tiny cross mark", "a tiny cross mark");
  EXPECT_DOUBLE_EQ(bleu_n(p, 1), 1.0);
  EXPECT_DOUBLE_EQ(bleu_n(p, 2), 1.0);
}

TEST(Bleu, ClippedUnigramCounts) { EXPECT_NEAR(bleu_n(one("a a a", "a b"), 1), 1.0 / 3.0, 1e-12); }

TEST(Bleu, BrevityPenalty) { EXPECT_NEAR(bleu_n(one("a", "a b c"), 1), std::exp(-2.0), 1e-12); }

TEST(Bleu, ZeroPrecisionAtAnyOrderGivesZero) { EXPECT_EQ(bleu_n(one("a b", "b a"), 2), 0.0); }

TEST(Bleu, ClosestReferenceLengthTiesToShorter) {
  // candidate length 3, references of length 2 and 4: r = 2, so no penalty
  const std::vector<EvalPair> p{EvalPair{"x", "a b c", {"a b", "a b c d"}}};
  EXPECT_DOUBLE_EQ(bleu_n(p, 1), 1.0);
}

TEST(Bleu, SentenceModeAveragesPerPair) {
  const std::vector<EvalPair> p{EvalPair{"1", "a b", {"a b"}}, EvalPair{"2", "a a a", {"a b"}}};
  EXPECT_NEAR(bleu_n(p, 1, BleuMode::kSentenceMean), (1.0 + 1.0 / 3.0) / 2.0, 1e-12);
  // corpus: 3 of 5 unigrams match, no penalty
  EXPECT_NEAR(bleu_n(p, 1), 3.0 / 5.0, 1e-12);
}

TEST(Bleu, RejectsBadOrder) { EXPECT_THROW(bleu_n(one("a", "a"), 0), ConfigError); }

TEST(RougeL, WorkedExamples) {
  EXPECT_DOUBLE_EQ(rouge_l(one("the cat sat", "the cat sat")), 1.0);
  const double p = 1.0, r = 2.0 / 3.0, b2 = 1.44;
  EXPECT_NEAR(rouge_l(one("the cat", "the cat sat")), (1 + b2) * p * r / (r + b2 * p), 1e-12);
  EXPECT_NEAR(rouge_l(one("the cat", "the cat sat")), 0.7722, 5e-5);
  EXPECT_EQ(rouge_l(one("x y", "a b")), 0.0);
}

TEST(RougeL, AppendingCorrectTokenNeverLowersRecall) {
  const auto ref = words("a tiny cross mark in the upper left region");
  std::vector<std::string> cand{"a", "ring"};
  std::size_t prev = lcs_length(cand, ref);
  for (std::size_t i = 2; i < ref.size(); ++i) {
    cand.push_back(ref[i]);
    const std::size_t now = lcs_length(cand, ref);
    EXPECT_GE(now, prev);
    prev = now;
  }
}

TEST(Cider, TwoImageWorkedExample) {
  const std::vector<EvalPair> p{EvalPair{"1", "red circle", {"red circle"}}, EvalPair{"2", "blue square", {"blue square"}}};
  EXPECT_NEAR(cider(p), 5.0, 1e-12);
}

TEST(Cider, NoSharedNgramScoresZero) {
  const std::vector<EvalPair> p{EvalPair{"1", "x y", {"red circle"}}, EvalPair{"2", "blue square", {"blue square"}}};
  const std::vector<EvalPair> q{EvalPair{"1", "red circle", {"red circle"}}, EvalPair{"2", "blue square", {"blue square"}}};
  EXPECT_NEAR(cider(p), cider(q) / 2.0, 1e-12);
}

TEST(Cider, DuplicateReferencesDoNotChangeScore) {
  std::vector<EvalPair> p{EvalPair{"1", "a red circle", {"a red circle", "a blue circle"}},
                          EvalPair{"2", "a tiny mark", {"a tiny ring mark"}},
                          EvalPair{"3", "a green square", {"a square"}}};
  const double base = cider(p);
  for (auto& e : p) {
    const auto refs = e.references;
    e.references.insert(e.references.end(), refs.begin(), refs.end());
  }
  EXPECT_NEAR(cider(p), base, 1e-12);
}

TEST(Cider, SingleImageCorpusRejected) { EXPECT_THROW(cider(one("a", "a")), DataError); }

TEST(Meteor, WorkedExamples) {
  EXPECT_NEAR(meteor_lite(one("a b c d", "a b c d")), 1.0 - 0.5 * std::pow(0.25, 3), 1e-12);
  EXPECT_NEAR(meteor_lite(one("a b c d", "a b c d")), 0.99219, 5e-6);
  EXPECT_EQ(meteor_lite(one("x", "a b")), 0.0);
  EXPECT_DOUBLE_EQ(meteor_lite(one("a b", "b a")), 0.5);
}

TEST(Meteor, AlignmentPrefersFewerChunks) {
  // "a" could map to either occurrence; the contiguous choice gives one chunk
  const Alignment a = meteor_alignment(words("a b"), words("a x a b"));
  EXPECT_EQ(a.matches, 2);
  EXPECT_EQ(a.chunks, 1);
}

TEST(Metrics, EmptyCandidateScoresZero) {
  const std::vector<EvalPair> p{EvalPair{"1", "", {"a b"}}, EvalPair{"2", "", {"c d"}}};
  EXPECT_EQ(bleu_n(p, 1), 0.0);
  EXPECT_EQ(rouge_l(p), 0.0);
  EXPECT_EQ(meteor_lite(p), 0.0);
  EXPECT_EQ(cider(p), 0.0);
}

TEST(Metrics, PairWithoutReferencesRejected) {
  const std::vector<EvalPair> p{EvalPair{"1", "a", {}}};
  EXPECT_THROW(bleu_n(p, 1), DataError);
}

TEST(MetricOracles, RandomPairsMatchBruteForce) {
  std::mt19937_64 rng(20240601);
  const auto corpus = oracle::random_corpus(rng, 100);
  for (int n = 1; n <= 3; ++n) EXPECT_NEAR(bleu_n(corpus, n), oracle::bleu(corpus, n), 1e-9) << "n=" << n;
  EXPECT_NEAR(rouge_l(corpus), oracle::rouge_l(corpus), 1e-9);
  EXPECT_NEAR(meteor_lite(corpus), oracle::meteor(corpus), 1e-9);
  EXPECT_NEAR(cider(corpus), oracle::cider(corpus), 1e-9);
  // each pair on its own as well
  for (const auto& p : corpus) {
    const std::vector<EvalPair> single{p};
    EXPECT_NEAR(bleu_n(single, 2), oracle::bleu(single, 2), 1e-9);
    EXPECT_NEAR(rouge_l(single), oracle::rouge_l(single), 1e-9);
    EXPECT_NEAR(meteor_lite(single), oracle::meteor(single), 1e-9);
  }
}

TEST(MetricOracles, SampleOrderInvariance) {
  std::mt19937_64 rng(99);
  auto corpus = oracle::random_corpus(rng, 60);
  const RawScores before = evaluate_all(corpus);
  std::shuffle(corpus.begin(), corpus.end(), rng);
  const RawScores after = evaluate_all(corpus);
  EXPECT_NEAR(before.bleu1, after.bleu1, 1e-12);
  EXPECT_NEAR(before.bleu2, after.bleu2, 1e-12);
  EXPECT_NEAR(before.bleu3, after.bleu3, 1e-12);
  EXPECT_NEAR(before.rouge_l, after.rouge_l, 1e-12);
  EXPECT_NEAR(before.meteor, after.meteor, 1e-12);
  EXPECT_NEAR(before.cider, after.cider, 1e-12);
}

TEST(MetricOracles, ScoresWithinRange) {
  std::mt19937_64 rng(5);
  const auto corpus = oracle::random_corpus(rng, 40);
  const RawScores s = evaluate_all(corpus);
  for (const double v : {s.bleu1, s.bleu2, s.bleu3, s.rouge_l, s.meteor}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_GE(s.cider, 0.0);
  EXPECT_LE(s.cider, 10.0);
}

}  // namespace
}  // namespace dualcap
