#include "embaudit/tokenizer.hpp"

#include <cctype>

namespace embaudit {

int TokenizerSpec::language_index(std::string_view language) const {
  for (std::size_t i = 0; i < languages.size(); ++i)
    if (languages[i] == language) return static_cast<int>(i);
  throw Error("tokenizer: unknown language tag '" + std::string(language) + "'");
}

std::pair<int, int> TokenizerSpec::partition(std::string_view language) const {
  if (vocab_size < 2 + static_cast<int>(languages.size()))
    throw Error("tokenizer: vocab too small for language partitions");
  const int index = language_index(language);
  const int content = vocab_size - 2;
  const int width = content / static_cast<int>(languages.size());
  const int begin = 2 + index * width;
  const int end = index + 1 == static_cast<int>(languages.size()) ? vocab_size
                                                                  : begin + width;
  return {begin, end};
}

int TokenizerSpec::token_for(std::string_view word, std::string_view language) const {
  auto [begin, end] = partition(language);
  std::uint64_t h = hash_bytes(language);
  h = hash_bytes("\x1f", h);
  h = hash_bytes(word, h);
  return begin + static_cast<int>(h % static_cast<std::uint64_t>(end - begin));
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

int count_tokens(std::string_view text) {
  return static_cast<int>(split_words(text).size());
}

Tokenized tokenize(std::span<const TextPiece> pieces, const TokenizerSpec& spec) {
  if (pieces.empty()) throw Error("tokenize: empty input");

  Tokenized out;
  out.ids.push_back(TokenizerSpec::kStartId);
  for (const TextPiece& piece : pieces) {
    const auto words = split_words(piece.text);
    if (words.empty())
      throw Error("tokenize: empty segment (language '" + piece.language + "')");
    TokenSpan span{static_cast<int>(out.ids.size()), static_cast<int>(words.size())};
    for (const auto& word : words)
      out.ids.push_back(spec.token_for(word, piece.language));
    out.span_map.spans.push_back(span);
  }
  out.ids.push_back(TokenizerSpec::kEndId);
  return out;
}

}  // namespace embaudit
