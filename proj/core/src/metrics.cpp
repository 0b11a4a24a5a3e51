#include "dualcap/metrics.hpp"

#include "dualcap/errors.hpp"
#include "dualcap/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string_view>
#include <unordered_map>

namespace dualcap {
namespace {

using Tokens = std::vector<std::string>;
using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngrams(const Tokens& toks, int n) {
  NgramCounts out;
  if (static_cast<int>(toks.size()) < n) return out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= toks.size(); ++i)
    ++out[Tokens(toks.begin() + static_cast<std::ptrdiff_t>(i), toks.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  return out;
}

struct TokenizedPair {
  Tokens candidate;
  std::vector<Tokens> references;
};

std::vector<TokenizedPair> tokenize(std::span<const EvalPair> pairs) {
  std::vector<TokenizedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    TokenizedPair t{split_words(p.candidate), {}};
    for (const auto& r : p.references) t.references.push_back(split_words(r));
    if (t.references.empty()) throw DataError("evaluation pair '" + p.image_id + "' has no references");
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

namespace {

double corpus_bleu(std::span<const EvalPair> pairs, int n) {
  const auto data = tokenize(pairs);
  std::vector<double> matched(static_cast<std::size_t>(n), 0.0);
  std::vector<double> total(static_cast<std::size_t>(n), 0.0);
  double cand_len = 0.0;
  double ref_len = 0.0;
  for (const auto& p : data) {
    const auto c = static_cast<double>(p.candidate.size());
    cand_len += c;
    // closest reference length, ties to the shorter one
    double best = -1.0;
    for (const auto& r : p.references) {
      const auto len = static_cast<double>(r.size());
      if (best < 0.0 || std::abs(len - c) < std::abs(best - c) || (std::abs(len - c) == std::abs(best - c) && len < best))
        best = len;
    }
    ref_len += best;
    for (int k = 1; k <= n; ++k) {
      const NgramCounts cand = ngrams(p.candidate, k);
      NgramCounts max_ref;
      for (const auto& r : p.references)
        for (const auto& [g, cnt] : ngrams(r, k)) max_ref[g] = std::max(max_ref[g], cnt);
      for (const auto& [g, cnt] : cand) {
        const auto it = max_ref.find(g);
        matched[static_cast<std::size_t>(k - 1)] += std::min(cnt, it == max_ref.end() ? 0 : it->second);
        total[static_cast<std::size_t>(k - 1)] += cnt;
      }
    }
  }
  if (cand_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    if (matched[static_cast<std::size_t>(k)] == 0.0) return 0.0;
    log_sum += std::log(matched[static_cast<std::size_t>(k)] / total[static_cast<std::size_t>(k)]);
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum / n);
}

}  // namespace

double bleu_n(std::span<const EvalPair> pairs, int n, BleuMode mode) {
  if (n < 1 || n > 4) throw ConfigError("BLEU order must be in [1, 4]");
  if (mode == BleuMode::kCorpus) return corpus_bleu(pairs, n);
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) sum += corpus_bleu(pairs.subspan(i, 1), n);
  return sum / static_cast<double>(pairs.size());
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_sentence(std::span<const std::string> candidate, std::span<const std::string> reference) {
  constexpr double kBeta = 1.2;
  const auto lcs = static_cast<double>(lcs_length(candidate, reference));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  return (1.0 + kBeta * kBeta) * p * r / (r + kBeta * kBeta * p);
}

double rouge_l(std::span<const EvalPair> pairs) {
  if (pairs.empty()) return 0.0;
  const auto data = tokenize(pairs);
  double sum = 0.0;
  for (const auto& p : data) {
    double best = 0.0;
    for (const auto& r : p.references) best = std::max(best, rouge_l_sentence(p.candidate, r));
    sum += best;
  }
  return sum / static_cast<double>(data.size());
}

double cider(std::span<const EvalPair> pairs) {
  constexpr int kMaxN = 4;
  constexpr double kSigma = 6.0;
  if (pairs.size() < 2) throw DataError("CIDEr needs a corpus of at least 2 images for document frequencies");
  const auto data = tokenize(pairs);

  // document frequency: number of images whose reference set contains the n-gram
  std::map<std::vector<std::string>, double> df;
  for (const auto& p : data) {
    std::set<std::vector<std::string>> seen;
    for (const auto& r : p.references)
      for (int n = 1; n <= kMaxN; ++n)
        for (const auto& [g, cnt] : ngrams(r, n)) seen.insert(g);
    for (const auto& g : seen) df[g] += 1.0;
  }
  const double log_images = std::log(static_cast<double>(data.size()));

  struct TfIdf {
    std::array<std::map<std::vector<std::string>, double>, kMaxN> vec;
    std::array<double, kMaxN> norm{};
    double length = 0.0;
  };
  auto weigh = [&](const Tokens& toks) {
    TfIdf out;
    out.length = static_cast<double>(toks.size());
    for (int n = 1; n <= kMaxN; ++n) {
      auto& v = out.vec[static_cast<std::size_t>(n - 1)];
      for (const auto& [g, cnt] : ngrams(toks, n)) {
        const auto it = df.find(g);
        const double doc = it == df.end() ? 0.0 : it->second;
        v[g] = cnt * (log_images - std::log(std::max(1.0, doc)));
      }
      double sq = 0.0;
      for (const auto& [g, w] : v) sq += w * w;
      out.norm[static_cast<std::size_t>(n - 1)] = std::sqrt(sq);
    }
    return out;
  };

  double corpus = 0.0;
  for (const auto& p : data) {
    const TfIdf cand = weigh(p.candidate);
    std::array<double, kMaxN> acc{};
    for (const auto& r : p.references) {
      const TfIdf ref = weigh(r);
      const double delta = cand.length - ref.length;
      for (std::size_t n = 0; n < kMaxN; ++n) {
        double val = 0.0;
        for (const auto& [g, w] : cand.vec[n]) {
          const auto it = ref.vec[n].find(g);
          if (it != ref.vec[n].end()) val += std::min(w, it->second) * it->second;
        }
        if (cand.norm[n] != 0.0 && ref.norm[n] != 0.0) {
          val /= cand.norm[n] * ref.norm[n];
        } else {
          val = 0.0;
        }
        acc[n] += val * std::exp(-(delta * delta) / (2.0 * kSigma * kSigma));
      }
    }
    double mean_n = 0.0;
    for (const double a : acc) mean_n += a;
    mean_n /= kMaxN;
    corpus += 10.0 * mean_n / static_cast<double>(p.references.size());
  }
  return corpus / static_cast<double>(data.size());
}

namespace {

// Lexicographic (matches, -chunks) over the candidate suffix starting at `pos`.
class AlignmentSearch {
 public:
  AlignmentSearch(std::span<const std::string> cand, std::span<const std::string> ref)
      : cand_(cand), ref_(ref), words_((ref.size() + 63) / 64), later_(cand.size(), 0) {
    std::unordered_map<std::string_view, int> seen;
    for (std::size_t i = cand.size(); i-- > 0;) later_[i] = seen[cand[i]]++;
  }

  Alignment solve() {
    std::vector<std::uint64_t> used(words_, 0);
    const auto [m, neg_chunks] = best(0, -1, used);
    return Alignment{m, -neg_chunks};
  }

 private:
  using Score = std::pair<int, int>;

  Score best(std::size_t pos, int last, std::vector<std::uint64_t>& used) {
    if (pos == cand_.size()) return {0, 0};
    std::vector<std::uint64_t> key = used;
    key.push_back(pos);
    key.push_back(static_cast<std::uint64_t>(last + 1));
    if (const auto it = memo_.find(key); it != memo_.end()) return it->second;

    // Skipping cand[pos] is only optimal if later copies can still take every free reference copy.
    int free_refs = 0;
    for (std::size_t j = 0; j < ref_.size(); ++j)
      if ((used[j / 64] & (std::uint64_t{1} << (j % 64))) == 0 && ref_[j] == cand_[pos]) ++free_refs;
    Score result{-1, 0};
    if (later_[pos] >= free_refs) result = best(pos + 1, -1, used);
    for (std::size_t j = 0; j < ref_.size(); ++j) {
      const std::uint64_t bit = std::uint64_t{1} << (j % 64);
      if ((used[j / 64] & bit) != 0 || ref_[j] != cand_[pos]) continue;
      used[j / 64] |= bit;
      Score sub = best(pos + 1, static_cast<int>(j), used);
      used[j / 64] &= ~bit;
      const bool continues = last >= 0 && static_cast<int>(j) == last + 1;
      sub.first += 1;
      sub.second -= continues ? 0 : 1;
      result = std::max(result, sub);
    }
    memo_.emplace(std::move(key), result);
    return result;
  }

  struct KeyHash {
    std::size_t operator()(const std::vector<std::uint64_t>& k) const {
      std::size_t h = 1469598103934665603ull;
      for (const auto w : k) h = (h ^ w) * 1099511628211ull;
      return h;
    }
  };

  std::span<const std::string> cand_;
  std::span<const std::string> ref_;
  std::size_t words_;
  std::vector<int> later_;  // occurrences of cand[i] after position i
  std::unordered_map<std::vector<std::uint64_t>, Score, KeyHash> memo_;
};

}  // namespace

Alignment meteor_alignment(std::span<const std::string> candidate, std::span<const std::string> reference) {
  return AlignmentSearch(candidate, reference).solve();
}

double meteor_sentence(std::span<const std::string> candidate, std::span<const std::string> reference) {
  const Alignment a = meteor_alignment(candidate, reference);
  if (a.matches == 0) return 0.0;
  const double m = a.matches;
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(a.chunks) / m;
  const double penalty = 0.5 * frag * frag * frag;
  return fmean * (1.0 - penalty);
}

double meteor_lite(std::span<const EvalPair> pairs) {
  if (pairs.empty()) return 0.0;
  const auto data = tokenize(pairs);
  double sum = 0.0;
  for (const auto& p : data) {
    double best = 0.0;
    for (const auto& r : p.references) best = std::max(best, meteor_sentence(p.candidate, r));
    sum += best;
  }
  return sum / static_cast<double>(data.size());
}

RawScores evaluate_all(std::span<const EvalPair> pairs, BleuMode bleu_mode) {
  RawScores s;
  s.bleu1 = bleu_n(pairs, 1, bleu_mode);
  s.bleu2 = bleu_n(pairs, 2, bleu_mode);
  s.bleu3 = bleu_n(pairs, 3, bleu_mode);
  s.meteor = meteor_lite(pairs);
  s.rouge_l = rouge_l(pairs);
  s.cider = cider(pairs);
  return s;
}

}  // namespace dualcap
