#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "embaudit/calibration.hpp"
#include "embaudit/corpus.hpp"
#include "embaudit/tokenizer.hpp"
#include "embaudit/types.hpp"

namespace embaudit {

enum class Pooling { kStartToken, kMean };

Pooling pooling_from_string(const std::string& name);
std::string to_string(Pooling pooling);

/// Optional injected positional bias: an additive pre-softmax logit bonus
/// on the pooling-token query row, decaying linearly over the content
/// keys (the pooling token's own key is exempt). Gives the randomly
/// initialized encoder a known, detectable front-position preference for
/// end-to-end runs.
struct AttentionBias {
  enum class Kind { kNone, kFrontLoaded };
  Kind kind = Kind::kNone;
  double strength = 0.0;

  static AttentionBias none() { return {}; }
  static AttentionBias front_loaded(double strength) {
    return {Kind::kFrontLoaded, strength};
  }
};

struct EncoderConfig {
  int layer_count = 12;
  int head_count = 4;
  int model_dim = 64;
  int max_positions = 1024;
  Pooling pooling = Pooling::kStartToken;
  std::uint64_t init_seed = 0;
  AttentionBias attention_bias = AttentionBias::none();
  /// Test-only degenerate mode: no positional encoding and attention
  /// replaced by uniform averaging, making document embeddings invariant
  /// under segment permutation (up to rounding).
  bool bag_of_tokens = false;
  TokenizerSpec tokenizer;

  void validate() const;
  std::string model_id() const;
};

struct EncodeOutput {
  Matrix hidden_states;  // tokens x model_dim, final layer
  Vector pooled;
  /// Per layer: (heads x sequence_length) post-softmax attention of the
  /// pooling-token query, exactly as used for value aggregation (i.e.
  /// calibrated in calibrated layers).
  std::vector<Matrix> start_attention;
  SpanMap span_map;
  Pooling pooling = Pooling::kStartToken;
  std::optional<CalibrationConfig> calibration_applied;
  /// Filled only when encode() was asked to capture intermediate states.
  std::vector<Matrix> layer_states;

  int sequence_length() const { return static_cast<int>(hidden_states.rows()); }
};

/// Miniature deterministic transformer encoder. Weights are fixed random
/// functions of init_seed; the object is immutable after construction and
/// safe for concurrent encode() calls.
class Encoder {
 public:
  explicit Encoder(EncoderConfig config);

  const EncoderConfig& config() const { return config_; }
  std::string model_id() const { return config_.model_id(); }

  EncodeOutput encode(const Tokenized& tokens,
                      const std::optional<CalibrationConfig>& calibration = {},
                      bool capture_layer_states = false) const;

  /// Tokenize + encode + pool.
  Vector embed_pieces(std::span<const TextPiece> pieces,
                      const std::optional<CalibrationConfig>& calibration = {}) const;
  Vector embed_document(const DocumentSpec& document, const SegmentSet& set,
                        const Corpus& corpus,
                        const std::optional<CalibrationConfig>& calibration = {}) const;
  Vector embed_segment_standalone(const Segment& segment,
                                  const std::optional<CalibrationConfig>& calibration = {}) const;

  /// Number of forward passes performed; used to verify cache resumability.
  std::uint64_t encode_calls() const { return encode_calls_.load(); }

 private:
  struct LayerWeights {
    Matrix wq, wk, wv, wo;
    Matrix ff1, ff2;
    Vector ff1_bias, ff2_bias;
    Vector ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  };

  EncoderConfig config_;
  Matrix token_embeddings_;
  std::vector<LayerWeights> layers_;
  mutable std::atomic<std::uint64_t> encode_calls_{0};
};

/// Mean of the final-layer hidden states over the token span of the
/// segment at the given document position (0-based). Only defined for
/// mean-pooled models, where token-level representations stay meaningful.
Vector contextualized_segment_embedding(const EncodeOutput& out, int position_index);

/// Deterministic sinusoidal position encoding, rows = positions.
Matrix sinusoidal_positions(int length, int dim);

}  // namespace embaudit
