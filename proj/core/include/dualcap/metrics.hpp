#pragma once

// Caption metrics computed from scratch on whitespace/punctuation tokens.
// Conventions follow the usual COCO caption evaluation: corpus-level BLEU with
// closest-reference brevity penalty, ROUGE-L with beta 1.2, CIDEr-D with
// sigma 6 and x10 scaling. METEOR is exact-match only ("METEOR-lite").

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dualcap {

struct EvalPair {
  std::string image_id;
  std::string candidate;
  std::vector<std::string> references;
};

enum class BleuMode { kCorpus, kSentenceMean };

/// BLEU over orders 1..n, n in [1, 3] (up to 4 accepted). Corpus-level by default.
double bleu_n(std::span<const EvalPair> pairs, int n, BleuMode mode = BleuMode::kCorpus);
double rouge_l(std::span<const EvalPair> pairs);
/// CIDEr-D; throws DataError for fewer than two images.
double cider(std::span<const EvalPair> pairs);
double meteor_lite(std::span<const EvalPair> pairs);

// Sentence-level building blocks, exposed for tests.
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);
double rouge_l_sentence(std::span<const std::string> candidate, std::span<const std::string> reference);

struct Alignment {
  int matches = 0;
  int chunks = 0;
};
/// Exact-match unigram alignment: maximum matches, then fewest chunks.
Alignment meteor_alignment(std::span<const std::string> candidate, std::span<const std::string> reference);
double meteor_sentence(std::span<const std::string> candidate, std::span<const std::string> reference);

struct RawScores {
  double bleu1 = 0.0;
  double bleu2 = 0.0;
  double bleu3 = 0.0;
  double meteor = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;
  std::optional<double> bert_score;  // pluggable, needs an external model
  std::optional<double> bleurt;      // pluggable, needs an external model
};

RawScores evaluate_all(std::span<const EvalPair> pairs, BleuMode bleu_mode = BleuMode::kCorpus);

}  // namespace dualcap
