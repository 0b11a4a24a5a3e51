#include "dualcap/tokenizer.hpp"

#include "dualcap/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

namespace dualcap {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (const char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c) || std::ispunct(c)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

std::string normalize_text(std::string_view text) {
  std::string out;
  for (const auto& w : split_words(text)) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

Tokenizer Tokenizer::build(std::span<const std::string> corpus, int min_freq) {
  if (corpus.empty()) throw DataError("cannot build a tokenizer from an empty corpus");
  std::map<std::string, int> freq;
  for (const auto& caption : corpus)
    for (auto& w : split_words(caption)) ++freq[w];
  std::vector<std::string> kept;
  for (const auto& [word, count] : freq)
    if (count >= min_freq) kept.push_back(word);
  return from_words(std::move(kept));
}

Tokenizer Tokenizer::from_words(std::vector<std::string> words) {
  Tokenizer t;
  t.tokens_ = {"<pad>", "<bos>", "<eos>", "<cls>", "<unk>"};
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  for (auto& w : words) t.tokens_.push_back(std::move(w));
  for (std::size_t i = 0; i < t.tokens_.size(); ++i) t.ids_.emplace(t.tokens_[i], static_cast<int>(i));
  return t;
}

int Tokenizer::id(std::string_view word) const {
  const auto it = ids_.find(std::string(word));
  return (it == ids_.end() || it->second < kNumSpecials) ? kUnk : it->second;
}

std::vector<int> Tokenizer::encode_words(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(id(w));
  return ids;
}

std::vector<int> Tokenizer::encode(std::string_view text, std::size_t max_tokens) const {
  if (max_tokens < 2) throw ConfigError("max_tokens must leave room for BOS and EOS");
  std::vector<int> words = encode_words(text);
  if (words.size() > max_tokens - 2) words.resize(max_tokens - 2);
  std::vector<int> ids;
  ids.reserve(words.size() + 2);
  ids.push_back(kBos);
  ids.insert(ids.end(), words.begin(), words.end());
  ids.push_back(kEos);
  return ids;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
  std::string out;
  for (const int id : ids) {
    if (id == kEos) break;
    if (id < kNumSpecials && id != kUnk) continue;
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) continue;
    if (!out.empty()) out.push_back(' ');
    out += tokens_[static_cast<std::size_t>(id)];
  }
  return out;
}

std::vector<std::string> Tokenizer::words() const {
  return {tokens_.begin() + kNumSpecials, tokens_.end()};
}

void Tokenizer::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["specials"] = {"<pad>", "<bos>", "<eos>", "<cls>", "<unk>"};
  j["words"] = words();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArtifactError("cannot write tokenizer " + path.string());
  out << j.dump(2) << '\n';
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("missing tokenizer " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    return from_words(j.at("words").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError("malformed tokenizer " + path.string() + ": " + e.what());
  }
}

}  // namespace dualcap
