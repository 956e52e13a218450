#include "kbqa/vocab.hpp"

#include <cctype>

namespace kbqa {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary::Vocabulary() { add("<unk>"); }

WordId Vocabulary::add(std::string_view word) {
  auto it = index_.find(std::string(word));
  if (it != index_.end()) return it->second;
  const WordId id{static_cast<std::uint32_t>(words_.size())};
  words_.emplace_back(word);
  index_.emplace(words_.back(), id);
  return id;
}

WordId Vocabulary::lookup(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnknown : it->second;
}

std::vector<WordId> Vocabulary::encode(std::string_view text, bool grow) {
  std::vector<WordId> ids;
  for (const auto& tok : tokenize(text)) ids.push_back(grow ? add(tok) : lookup(tok));
  return ids;
}

Vocabulary build_vocabulary(std::span<const std::string> texts, std::size_t min_count) {
  std::unordered_map<std::string, std::size_t> counts;
  std::vector<std::string> order;
  for (const auto& text : texts) {
    for (auto& tok : tokenize(text)) {
      if (counts[tok]++ == 0) order.push_back(tok);
    }
  }
  Vocabulary vocab;
  for (const auto& w : order) {
    if (counts[w] >= min_count) vocab.add(w);
  }
  return vocab;
}

}  // namespace kbqa
