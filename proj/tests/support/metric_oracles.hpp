#pragma once

// Deliberately naive reference implementations of the caption metrics, written
// independently of the library code: direct enumeration, plain recursion and
// exhaustive search. Only usable on short sentences.

#include "dualcap/metrics.hpp"
#include "dualcap/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace dualcap::oracle {

using Words = std::vector<std::string>;

inline std::vector<Words> all_ngrams(const Words& w, int n) {
  std::vector<Words> out;
  for (int i = 0; i + n <= static_cast<int>(w.size()); ++i) out.emplace_back(w.begin() + i, w.begin() + i + n);
  return out;
}

inline int count_of(const std::vector<Words>& grams, const Words& g) {
  return static_cast<int>(std::count(grams.begin(), grams.end(), g));
}

inline double bleu(const std::vector<EvalPair>& pairs, int n) {
  std::vector<double> hit(n, 0.0), tot(n, 0.0);
  double c = 0.0, r = 0.0;
  for (const auto& p : pairs) {
    const Words cand = split_words(p.candidate);
    std::vector<Words> refs;
    for (const auto& s : p.references) refs.push_back(split_words(s));
    c += cand.size();
    int best = -1;
    for (const auto& ref : refs) {
      const int len = static_cast<int>(ref.size());
      const int d = std::abs(len - static_cast<int>(cand.size()));
      const int bd = std::abs(best - static_cast<int>(cand.size()));
      if (best < 0 || d < bd || (d == bd && len < best)) best = len;
    }
    r += best;
    for (int k = 1; k <= n; ++k) {
      const auto cg = all_ngrams(cand, k);
      std::vector<Words> distinct;
      for (const auto& g : cg)
        if (std::find(distinct.begin(), distinct.end(), g) == distinct.end()) distinct.push_back(g);
      for (const auto& g : distinct) {
        int max_ref = 0;
        for (const auto& ref : refs) max_ref = std::max(max_ref, count_of(all_ngrams(ref, k), g));
        hit[k - 1] += std::min(count_of(cg, g), max_ref);
      }
      tot[k - 1] += cg.size();
    }
  }
  if (c == 0.0) return 0.0;
  double product = 1.0;
  for (int k = 0; k < n; ++k) {
    if (hit[k] == 0.0) return 0.0;
    product *= hit[k] / tot[k];
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::pow(product, 1.0 / n);
}

inline int lcs_recursive(const Words& a, const Words& b, std::size_t i = 0, std::size_t j = 0) {
  if (i == a.size() || j == b.size()) return 0;
  if (a[i] == b[j]) return 1 + lcs_recursive(a, b, i + 1, j + 1);
  return std::max(lcs_recursive(a, b, i + 1, j), lcs_recursive(a, b, i, j + 1));
}

inline double rouge_l(const std::vector<EvalPair>& pairs) {
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : pairs) {
    const Words cand = split_words(p.candidate);
    double best = 0.0;
    for (const auto& s : p.references) {
      const Words ref = split_words(s);
      const double l = lcs_recursive(cand, ref);
      if (l == 0.0) continue;
      const double prec = l / cand.size(), rec = l / ref.size(), b2 = 1.2 * 1.2;
      best = std::max(best, (1 + b2) * prec * rec / (rec + b2 * prec));
    }
    sum += best;
  }
  return sum / pairs.size();
}

struct AlignmentScore {
  int matches = 0;
  int chunks = 0;
};

/// Tries every injective partial map of candidate words onto equal reference words.
inline AlignmentScore exhaustive_alignment(const Words& cand, const Words& ref) {
  AlignmentScore best;
  std::vector<int> map(cand.size(), -1);
  std::vector<bool> used(ref.size(), false);
  std::function<void(std::size_t)> go = [&](std::size_t i) {
    if (i == cand.size()) {
      int m = 0, ch = 0;
      for (std::size_t k = 0; k < cand.size(); ++k) {
        if (map[k] < 0) continue;
        ++m;
        if (k == 0 || map[k - 1] < 0 || map[k - 1] + 1 != map[k]) ++ch;
      }
      if (m > best.matches || (m == best.matches && ch < best.chunks)) best = {m, ch};
      return;
    }
    go(i + 1);
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (used[j] || ref[j] != cand[i]) continue;
      used[j] = true;
      map[i] = static_cast<int>(j);
      go(i + 1);
      map[i] = -1;
      used[j] = false;
    }
  };
  go(0);
  return best;
}

inline double meteor(const std::vector<EvalPair>& pairs) {
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : pairs) {
    const Words cand = split_words(p.candidate);
    double best = 0.0;
    for (const auto& s : p.references) {
      const Words ref = split_words(s);
      const AlignmentScore a = exhaustive_alignment(cand, ref);
      if (a.matches == 0) continue;
      const double prec = double(a.matches) / cand.size(), rec = double(a.matches) / ref.size();
      const double f = 10 * prec * rec / (rec + 9 * prec);
      const double frag = double(a.chunks) / a.matches;
      best = std::max(best, f * (1 - 0.5 * frag * frag * frag));
    }
    sum += best;
  }
  return sum / pairs.size();
}

inline double cider(const std::vector<EvalPair>& pairs) {
  const double n_images = pairs.size();
  std::vector<std::vector<Words>> refs(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i)
    for (const auto& s : pairs[i].references) refs[i].push_back(split_words(s));
  auto df = [&](const Words& g) {
    const int n = static_cast<int>(g.size());
    double images = 0.0;
    for (const auto& rs : refs) {
      bool found = false;
      for (const auto& r : rs) found = found || count_of(all_ngrams(r, n), g) > 0;
      images += found ? 1.0 : 0.0;
    }
    return images;
  };
  auto weight = [&](const Words& sentence, const Words& g, int n) {
    return count_of(all_ngrams(sentence, n), g) * std::log(n_images / std::max(1.0, df(g)));
  };
  double total = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Words cand = split_words(pairs[i].candidate);
    double per_image = 0.0;
    for (const auto& ref : refs[i]) {
      double per_ref = 0.0;
      for (int n = 1; n <= 4; ++n) {
        double dot = 0.0, nc = 0.0, nr = 0.0;
        std::vector<Words> seen;
        for (const auto& g : all_ngrams(cand, n)) {
          if (std::find(seen.begin(), seen.end(), g) != seen.end()) continue;
          seen.push_back(g);
          const double wc = weight(cand, g, n), wr = weight(ref, g, n);
          dot += std::min(wc, wr) * wr;
          nc += wc * wc;
        }
        seen.clear();
        for (const auto& g : all_ngrams(ref, n)) {
          if (std::find(seen.begin(), seen.end(), g) != seen.end()) continue;
          seen.push_back(g);
          const double wr = weight(ref, g, n);
          nr += wr * wr;
        }
        if (nc == 0.0 || nr == 0.0) continue;
        const double delta = double(cand.size()) - double(ref.size());
        per_ref += dot / (std::sqrt(nc) * std::sqrt(nr)) * std::exp(-delta * delta / 72.0);
      }
      per_image += 10.0 * per_ref / 4.0;
    }
    total += per_image / refs[i].size();
  }
  return total / n_images;
}

/// Short sentences over a five-word vocabulary, one to three references each.
inline std::vector<EvalPair> random_corpus(std::mt19937_64& rng, int n) {
  static const std::vector<std::string> vocab{"a", "b", "c", "d", "e"};
  auto sentence = [&](int max_len) {
    const int len = 1 + static_cast<int>(rng() % max_len);
    std::string s;
    for (int i = 0; i < len; ++i) s += (i ? " " : "") + vocab[rng() % vocab.size()];
    return s;
  };
  std::vector<EvalPair> out;
  for (int i = 0; i < n; ++i) {
    EvalPair p{std::to_string(i), sentence(6), {}};
    const int refs = 1 + static_cast<int>(rng() % 3);
    for (int r = 0; r < refs; ++r) p.references.push_back(sentence(6));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace dualcap::oracle
