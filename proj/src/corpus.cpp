#include "embaudit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace embaudit {

const std::vector<int> Corpus::kEmpty;

void Corpus::add(Segment segment) {
  if (by_id_.count(segment.id))
    throw Error("corpus: duplicate segment id '" + segment.id + "'");
  const int index = static_cast<int>(segments_.size());
  by_id_[segment.id] = index;
  by_language_[segment.language].push_back(index);
  segments_.push_back(std::move(segment));
}

const Segment& Corpus::by_id(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw Error("corpus: unknown segment id '" + id + "'");
  return segments_[it->second];
}

bool Corpus::contains(const std::string& id) const { return by_id_.count(id) > 0; }

const std::vector<int>& Corpus::in_language(const std::string& language) const {
  auto it = by_language_.find(language);
  return it == by_language_.end() ? kEmpty : it->second;
}

LanguageConfig LanguageConfig::monolingual(const std::string& language, int n) {
  LanguageConfig config;
  config.kind = Kind::kMonolingual;
  config.per_position.assign(n, language);
  config.validate();
  return config;
}

LanguageConfig LanguageConfig::mixed(const std::string& lead, const std::string& later,
                                     int n) {
  LanguageConfig config;
  config.kind = Kind::kMixed;
  config.per_position.resize(n);
  if (n > 0) config.per_position[0] = lead;
  for (int i = 1; i < n; ++i) config.per_position[i] = later;
  config.validate();
  return config;
}

void LanguageConfig::validate() const {
  if (per_position.empty()) throw Error("language config: empty position list");
  if (kind == Kind::kMonolingual) {
    for (const auto& tag : per_position)
      if (tag != per_position.front())
        throw Error("language config: monolingual requires identical tags");
  } else {
    if (per_position.size() < 2)
      throw Error("language config: mixed requires n >= 2");
    for (std::size_t i = 2; i < per_position.size(); ++i)
      if (per_position[i] != per_position[1])
        throw Error("language config: mixed requires (lead, later, ..., later)");
    if (per_position[0] == per_position[1])
      throw Error("language config: mixed requires lead != later");
  }
}

std::string LanguageConfig::id() const {
  if (kind == Kind::kMonolingual) return "mono-" + per_position.front();
  return "mixed-" + per_position.front() + "-" + per_position[1];
}

std::string ExperimentInstance::id() const {
  return language_config.id() + "-n" + std::to_string(n);
}

std::uint64_t factorial(int n) {
  if (n < 0) throw Error("factorial of negative n");
  if (n > 20) throw Error("factorial overflow");
  std::uint64_t f = 1;
  for (int i = 2; i <= n; ++i) f *= static_cast<std::uint64_t>(i);
  return f;
}

std::uint64_t expected_document_count(std::uint64_t set_count, int n) {
  return set_count * factorial(n);
}

namespace {

constexpr int kWordsPerLanguage = 4096;
constexpr int kTopicWindow = 16;

std::string surface_word(const std::string& language, int index) {
  std::ostringstream os;
  os << language << "w" << index;
  return os.str();
}

std::string topic_id(int topic) {
  std::ostringstream os;
  os << "t" << std::setfill('0') << std::setw(4) << topic;
  return os.str();
}

// Uniform integer in [0, bound) from the raw 64-bit stream; rejection
// sampling keeps the draw exactly uniform and platform-stable.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

}  // namespace

Corpus generate_synthetic_corpus(std::uint64_t seed,
                                 const std::vector<std::string>& languages,
                                 int segments_per_language,
                                 std::pair<int, int> length_band) {
  if (languages.empty()) throw Error("generate_synthetic_corpus: empty language list");
  if (segments_per_language < 1)
    throw Error("generate_synthetic_corpus: need at least one segment per language");
  const auto [min_tokens, max_tokens] = length_band;
  if (min_tokens < 1 || max_tokens < min_tokens)
    throw Error("generate_synthetic_corpus: invalid length band");

  Corpus corpus;
  for (std::size_t li = 0; li < languages.size(); ++li) {
    const std::string& language = languages[li];
    for (int topic = 0; topic < segments_per_language; ++topic) {
      std::mt19937_64 rng(mix_seed(mix_seed(seed, li), static_cast<std::uint64_t>(topic)));
      const int tokens =
          min_tokens + static_cast<int>(bounded(rng, static_cast<std::uint64_t>(
                                                         max_tokens - min_tokens + 1)));
      // Most words come from a small topic-specific window of the
      // language vocabulary with Zipfian repetition, giving each segment
      // the bursty, topic-identifying word statistics of comparable
      // articles; the rest is uniform background vocabulary.
      double harmonic = 0.0;
      for (int r = 1; r <= kTopicWindow; ++r) harmonic += 1.0 / r;
      const int window_start =
          (topic * kTopicWindow) % (kWordsPerLanguage - kTopicWindow + 1);
      std::ostringstream text;
      for (int w = 0; w < tokens; ++w) {
        int word_index;
        if (bounded(rng, 5) < 4) {
          const double u =
              (static_cast<double>(bounded(rng, 1u << 24)) + 0.5) / (1u << 24) * harmonic;
          double cumulative = 0.0;
          int rank = kTopicWindow;
          for (int r = 1; r <= kTopicWindow; ++r) {
            cumulative += 1.0 / r;
            if (u <= cumulative) {
              rank = r;
              break;
            }
          }
          word_index = window_start + rank - 1;
        } else {
          word_index = static_cast<int>(bounded(rng, kWordsPerLanguage));
        }
        if (w) text << ' ';
        text << surface_word(language, word_index);
      }
      Segment segment;
      segment.language = language;
      segment.topic = topic_id(topic);
      segment.id = language + "-" + segment.topic;
      segment.text = text.str();
      segment.token_count = tokens;
      corpus.add(std::move(segment));
    }
  }
  return corpus;
}

std::vector<SegmentSet> build_segment_sets(const Corpus& corpus, int n,
                                           const LanguageConfig& config,
                                           int set_count, std::uint64_t seed,
                                           const std::string& id_prefix) {
  if (n < 1) throw Error("build_segment_sets: n must be >= 1");
  if (set_count < 1) throw Error("build_segment_sets: set_count must be >= 1");
  config.validate();
  if (config.n() != n)
    throw Error("build_segment_sets: language config has " +
                std::to_string(config.n()) + " positions, expected " +
                std::to_string(n));

  // Per-language demand across the n position slots.
  std::map<std::string, int> demand;
  for (const auto& tag : config.per_position) ++demand[tag];
  for (const auto& [language, count] : demand) {
    const int available = static_cast<int>(corpus.in_language(language).size());
    if (available < count)
      throw Error("build_segment_sets: need " + std::to_string(count) + " '" +
                  language + "' segments per set but corpus has " +
                  std::to_string(available));
  }

  const std::string prefix = id_prefix.empty() ? config.id() + "-n" + std::to_string(n)
                                               : id_prefix;
  std::vector<SegmentSet> sets;
  sets.reserve(set_count);
  for (int s = 0; s < set_count; ++s) {
    std::mt19937_64 rng(mix_seed(mix_seed(seed, 0x5e75u), static_cast<std::uint64_t>(s)));
    // Draw, per language, the required number of distinct segments.
    std::map<std::string, std::vector<int>> picks;
    for (const auto& [language, count] : demand) {
      std::vector<int> pool = corpus.in_language(language);
      for (int i = 0; i < count; ++i) {
        const std::size_t j =
            i + static_cast<std::size_t>(bounded(rng, pool.size() - i));
        std::swap(pool[i], pool[j]);
      }
      picks[language] = std::vector<int>(pool.begin(), pool.begin() + count);
    }
    SegmentSet set;
    std::ostringstream os;
    os << prefix << "-s" << std::setfill('0') << std::setw(3) << s;
    set.id = os.str();
    std::map<std::string, int> used;
    for (const auto& tag : config.per_position) {
      const int index = picks[tag][used[tag]++];
      set.segment_ids.push_back(corpus.segments()[index].id);
    }
    sets.push_back(std::move(set));
  }
  return sets;
}

namespace {

std::string permutation_label(const std::vector<int>& permutation) {
  std::string label = "p";
  for (int index : permutation) label += std::to_string(index + 1);
  return label;
}

DocumentSpec make_document(const SegmentSet& set, const Corpus& corpus,
                           const std::vector<int>& permutation, int max_doc_tokens) {
  DocumentSpec doc;
  doc.segment_set_id = set.id;
  doc.permutation = permutation;
  doc.permutation_id = permutation_label(permutation);
  std::string text;
  int tokens = 2;  // <s> ... </s>
  for (std::size_t i = 0; i < permutation.size(); ++i) {
    const Segment& segment = corpus.by_id(set.segment_ids[permutation[i]]);
    if (i) text += ' ';
    text += segment.text;
    tokens += segment.token_count;
  }
  if (tokens > max_doc_tokens)
    throw Error("enumerate_documents: document for set '" + set.id + "' has " +
                std::to_string(tokens) + " tokens, exceeding the limit of " +
                std::to_string(max_doc_tokens));
  doc.text = std::move(text);
  doc.token_count = tokens;
  return doc;
}

// The n! permutations partition into (n-1)! classes {sigma o c : c in C_n}
// (C_n the cyclic rotations). Each class is a Latin square: across its n
// rows, every segment visits every position exactly once, so sampling
// whole classes keeps (segment, position) counts balanced.
std::vector<int> compose_with_rotation(const std::vector<int>& sigma, int shift) {
  const int n = static_cast<int>(sigma.size());
  std::vector<int> row(n);
  for (int i = 0; i < n; ++i) row[i] = sigma[(i + shift) % n];
  return row;
}

}  // namespace

std::vector<DocumentSpec> enumerate_documents(const SegmentSet& set,
                                              const Corpus& corpus,
                                              int permutations_per_set,
                                              std::uint64_t seed, int max_doc_tokens) {
  const int n = set.n();
  if (n < 1) throw Error("enumerate_documents: empty segment set");
  {
    std::set<std::string> distinct(set.segment_ids.begin(), set.segment_ids.end());
    if (static_cast<int>(distinct.size()) != n)
      throw Error("enumerate_documents: segment set '" + set.id +
                  "' has duplicate segments");
  }
  const std::uint64_t total = factorial(n);

  std::vector<std::vector<int>> permutations;
  if (permutations_per_set == kAllPermutations ||
      static_cast<std::uint64_t>(permutations_per_set) == total) {
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    do {
      permutations.push_back(perm);
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    const int k = permutations_per_set;
    if (k < 1 || static_cast<std::uint64_t>(k) > total)
      throw Error("enumerate_documents: permutations_per_set out of range");
    if (k % n != 0)
      throw Error("enumerate_documents: sampled permutations_per_set (" +
                  std::to_string(k) + ") must be a multiple of n (" +
                  std::to_string(n) + ") for position balance");
    std::mt19937_64 rng(mix_seed(mix_seed(seed, 0xd0c5u), hash_bytes(set.id)));
    std::set<std::vector<int>> emitted;
    std::vector<int> sigma(n);
    for (int i = 0; i < n; ++i) sigma[i] = i;
    while (static_cast<int>(permutations.size()) < k) {
      for (int i = 0; i < n - 1; ++i) {
        const int j = i + static_cast<int>(bounded(rng, static_cast<std::uint64_t>(n - i)));
        std::swap(sigma[i], sigma[j]);
      }
      // A fresh class shares no row with previously emitted ones.
      if (emitted.count(sigma)) continue;
      for (int shift = 0; shift < n; ++shift) {
        auto row = compose_with_rotation(sigma, shift);
        emitted.insert(row);
        permutations.push_back(std::move(row));
      }
    }
  }

  std::vector<DocumentSpec> documents;
  documents.reserve(permutations.size());
  for (const auto& permutation : permutations)
    documents.push_back(make_document(set, corpus, permutation, max_doc_tokens));
  return documents;
}

std::vector<TextPiece> document_pieces(const DocumentSpec& document,
                                       const SegmentSet& set, const Corpus& corpus) {
  if (document.segment_set_id != set.id)
    throw Error("document_pieces: document belongs to set '" +
                document.segment_set_id + "', not '" + set.id + "'");
  std::vector<TextPiece> pieces;
  pieces.reserve(document.permutation.size());
  for (int canonical : document.permutation) {
    if (canonical < 0 || canonical >= set.n())
      throw Error("document_pieces: permutation index out of range");
    const Segment& segment = corpus.by_id(set.segment_ids[canonical]);
    pieces.push_back({segment.text, segment.language});
  }
  return pieces;
}

Corpus load_corpus(const std::filesystem::path& path,
                   const std::vector<std::string>& allowed_languages,
                   std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw Error("load_corpus: cannot open '" + path.string() + "'");

  Corpus corpus;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error("load_corpus: malformed JSON at line " + std::to_string(line_number) +
                  ": " + e.what());
    }
    if (!record.is_object() || !record.contains("id") || !record.contains("language") ||
        !record.contains("topic") || !record.contains("text"))
      throw Error("load_corpus: record at line " + std::to_string(line_number) +
                  " missing required fields {id, language, topic, text}");
    Segment segment;
    segment.id = record.at("id").get<std::string>();
    segment.language = record.at("language").get<std::string>();
    segment.topic = record.at("topic").get<std::string>();
    segment.text = record.at("text").get<std::string>();
    if (std::find(allowed_languages.begin(), allowed_languages.end(),
                  segment.language) == allowed_languages.end())
      throw Error("load_corpus: unknown language tag '" + segment.language +
                  "' at line " + std::to_string(line_number));
    segment.token_count = count_tokens(segment.text);
    if (segment.token_count == 0)
      throw Error("load_corpus: empty segment text at line " +
                  std::to_string(line_number));
    corpus.add(std::move(segment));
  }

  // Comparable-corpus sanity: flag articles far off the English length.
  if (warnings) {
    std::map<std::string, const Segment*> english_by_topic;
    for (const Segment& segment : corpus.segments())
      if (segment.language == "en") english_by_topic[segment.topic] = &segment;
    for (const Segment& segment : corpus.segments()) {
      if (segment.language == "en") continue;
      auto it = english_by_topic.find(segment.topic);
      if (it == english_by_topic.end()) continue;
      const double reference = it->second->token_count;
      if (std::abs(segment.token_count - reference) > 0.7 * reference) {
        std::ostringstream os;
        os << "segment '" << segment.id << "' length " << segment.token_count
           << " outside +-70% of English topic length " << it->second->token_count;
        warnings->push_back(os.str());
      }
    }
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_corpus: cannot open '" + path.string() + "' for writing");
  for (const Segment& segment : corpus.segments()) {
    nlohmann::json record{{"id", segment.id},
                          {"language", segment.language},
                          {"topic", segment.topic},
                          {"text", segment.text}};
    out << record.dump() << '\n';
  }
}

}  // namespace embaudit
