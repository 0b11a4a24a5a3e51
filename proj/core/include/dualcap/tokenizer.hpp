#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dualcap {

enum SpecialToken : int { kPad = 0, kBos = 1, kEos = 2, kCls = 3, kUnk = 4 };
inline constexpr int kNumSpecials = 5;

/// Lowercases and splits on whitespace and ASCII punctuation; punctuation is dropped.
std::vector<std::string> split_words(std::string_view text);
/// split_words() joined by single spaces.
std::string normalize_text(std::string_view text);

/// Closed word-level vocabulary. Ids are contiguous, specials occupy 0..4.
class Tokenizer {
 public:
  static Tokenizer build(std::span<const std::string> corpus, int min_freq);
  static Tokenizer from_words(std::vector<std::string> words);

  /// [BOS, w..., EOS], truncated so the whole sequence fits in max_tokens.
  std::vector<int> encode(std::string_view text, std::size_t max_tokens = 32) const;
  /// Word ids only, no framing.
  std::vector<int> encode_words(std::string_view text) const;
  /// Joins non-special tokens up to the first EOS.
  std::string decode(std::span<const int> ids) const;

  int id(std::string_view word) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  /// Non-special vocabulary in id order.
  std::vector<std::string> words() const;

  void save(const std::filesystem::path& path) const;
  static Tokenizer load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace dualcap
