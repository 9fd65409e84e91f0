#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "embaudit/tokenizer.hpp"
#include "embaudit/types.hpp"

namespace embaudit {

/// A logically coherent, indivisible unit of text.
struct Segment {
  std::string id;
  std::string language;
  std::string topic;
  std::string text;
  int token_count = 0;  // framework-tokenizer tokens
};

class Corpus {
 public:
  void add(Segment segment);
  const Segment& by_id(const std::string& id) const;
  bool contains(const std::string& id) const;
  std::span<const Segment> segments() const { return segments_; }
  /// Indices (into segments()) of all segments in a language, insertion order.
  const std::vector<int>& in_language(const std::string& language) const;
  std::size_t size() const { return segments_.size(); }

 private:
  std::vector<Segment> segments_;
  std::unordered_map<std::string, int> by_id_;
  std::unordered_map<std::string, std::vector<int>> by_language_;
  static const std::vector<int> kEmpty;
};

/// Position -> language mapping of an experiment instance. Monolingual
/// configurations repeat one tag; mixed ones are (lead, later, ..., later)
/// with lead != later.
struct LanguageConfig {
  enum class Kind { kMonolingual, kMixed };

  Kind kind = Kind::kMonolingual;
  std::vector<std::string> per_position;

  static LanguageConfig monolingual(const std::string& language, int n);
  static LanguageConfig mixed(const std::string& lead, const std::string& later, int n);

  int n() const { return static_cast<int>(per_position.size()); }
  void validate() const;
  std::string id() const;  // "mono-en", "mixed-de-en"
};

/// An unordered collection of n distinct segments. segment_ids holds the
/// canonical order: position slot i of the language configuration.
struct SegmentSet {
  std::string id;
  std::vector<std::string> segment_ids;

  int n() const { return static_cast<int>(segment_ids.size()); }
};

/// One permuted concatenation of a segment set. permutation[i] is the
/// canonical segment index placed at document position i (0-based); text
/// joins the permuted segment texts with single spaces; token_count
/// includes the two special tokens.
struct DocumentSpec {
  std::string segment_set_id;
  std::string permutation_id;
  std::vector<int> permutation;
  std::string text;
  int token_count = 0;

  int n() const { return static_cast<int>(permutation.size()); }
};

struct ExperimentInstance {
  int n = 0;
  LanguageConfig language_config;
  std::vector<SegmentSet> sets;
  std::vector<DocumentSpec> documents;
  std::uint64_t seed = 0;

  std::string id() const;  // "<config-id>-n<n>"
};

/// Sentinel for enumerate_documents: emit the full factorial set.
inline constexpr int kAllPermutations = -1;

std::uint64_t factorial(int n);

/// Documents produced by full enumeration over `set_count` sets.
std::uint64_t expected_document_count(std::uint64_t set_count, int n);

/// Deterministic synthetic comparable corpus: per language,
/// `segments_per_language` segments with shared topic ids across
/// languages; token counts drawn uniformly from the length band; each
/// language uses its own surface vocabulary so cross-language segments
/// share no content tokens.
Corpus generate_synthetic_corpus(std::uint64_t seed,
                                 const std::vector<std::string>& languages,
                                 int segments_per_language,
                                 std::pair<int, int> length_band);

/// Samples `set_count` segment sets matching the configuration's
/// position->language mapping, without replacement inside a set.
/// `id_prefix` namespaces set ids (default derives from the config).
std::vector<SegmentSet> build_segment_sets(const Corpus& corpus, int n,
                                           const LanguageConfig& config,
                                           int set_count, std::uint64_t seed,
                                           const std::string& id_prefix = "");

/// Permuted documents of one set. `permutations_per_set` is either
/// kAllPermutations (the full factorial set, lexicographic) or a multiple
/// of n not exceeding n!, in which case a position-balanced subset is
/// sampled: each segment occupies each position exactly k/n times.
std::vector<DocumentSpec> enumerate_documents(const SegmentSet& set,
                                              const Corpus& corpus,
                                              int permutations_per_set,
                                              std::uint64_t seed,
                                              int max_doc_tokens = 8192);

/// Segment texts+languages of a document in permuted order, ready for
/// tokenization.
std::vector<TextPiece> document_pieces(const DocumentSpec& document,
                                       const SegmentSet& set, const Corpus& corpus);

/// Reads a JSONL corpus ({"id","language","topic","text"} per line).
/// Token counts are computed with the framework tokenizer. Comparable-
/// corpus length imbalance (non-English article outside +-70% of the
/// English length for the same topic) is reported through `warnings`,
/// not treated as an error.
Corpus load_corpus(const std::filesystem::path& path,
                   const std::vector<std::string>& allowed_languages,
                   std::vector<std::string>* warnings = nullptr);

void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

}  // namespace embaudit
