#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "embaudit/types.hpp"

namespace embaudit {

/// Deterministic whitespace + hashing tokenizer. Token id 0 is the
/// start-of-sequence pooling token <s>, id 1 the end-of-sequence </s>.
/// Content ids {2..vocab_size-1} are split into one contiguous partition
/// per language tag, so segments in different languages never share ids.
struct TokenizerSpec {
  static constexpr int kStartId = 0;
  static constexpr int kEndId = 1;

  int vocab_size = 8192;
  std::vector<std::string> languages = {"en", "zh", "de", "it", "ko", "hi"};

  int language_index(std::string_view language) const;
  /// Half-open content-id range assigned to a language.
  std::pair<int, int> partition(std::string_view language) const;
  int token_for(std::string_view word, std::string_view language) const;
};

/// A run of text in a single language; documents are sequences of pieces.
struct TextPiece {
  std::string text;
  std::string language;
};

/// Contiguous token-index range of one segment within a document,
/// excluding special tokens. Half-open [begin, begin+count).
struct TokenSpan {
  int begin = 0;
  int count = 0;
};

struct SpanMap {
  std::vector<TokenSpan> spans;  // indexed by document position (0-based)
};

struct Tokenized {
  std::vector<int> ids;  // <s>, content..., </s>
  SpanMap span_map;

  int length() const { return static_cast<int>(ids.size()); }
};

/// Encodes the pieces in order as <s> w.. w </s> and records the token
/// span of each piece. Every piece must contain at least one word.
Tokenized tokenize(std::span<const TextPiece> pieces, const TokenizerSpec& spec);

/// Token count of a text under the framework tokenizer (whitespace words).
int count_tokens(std::string_view text);

std::vector<std::string> split_words(std::string_view text);

}  // namespace embaudit
