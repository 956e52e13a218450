#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kbqa/ids.hpp"

namespace kbqa {

// Lower-cased whitespace tokens.
std::vector<std::string> tokenize(std::string_view text);

// Question word table. Id 0 is reserved for <unk>.
class Vocabulary {
 public:
  static constexpr WordId kUnknown{0};

  Vocabulary();

  WordId add(std::string_view word);
  // kUnknown when the word is absent.
  WordId lookup(std::string_view word) const;
  // Tokenizes text; unseen words are added when grow is true, else mapped to <unk>.
  std::vector<WordId> encode(std::string_view text, bool grow);

  std::size_t size() const { return words_.size(); }
  const std::string& word(WordId id) const { return words_.at(id.value); }
  const std::vector<std::string>& words() const { return words_; }

  bool operator==(const Vocabulary& other) const { return words_ == other.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, WordId> index_;
};

// Words occurring at least min_count times across texts, in order of first
// occurrence. Rarer words (typically entity mentions seen once) fall back to
// <unk>, which then gets trained as well.
Vocabulary build_vocabulary(std::span<const std::string> texts, std::size_t min_count);

}  // namespace kbqa
