#include "embaudit/encoder.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <unordered_set>

namespace embaudit {
namespace {

constexpr double kLayerNormEpsilon = 1e-5;

// Box-Muller over raw mt19937_64 draws. std::normal_distribution is
// implementation-defined, this is not.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = (static_cast<double>(rng_() >> 11) + 1.0) * 0x1p-53;  // (0,1]
    const double u2 = static_cast<double>(rng_() >> 11) * 0x1p-53;          // [0,1)
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 rng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

Matrix random_matrix(int rows, int cols, double stddev, std::uint64_t seed) {
  NormalSampler normal(seed);
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = stddev * normal();
  return m;
}

void softmax_rows_in_place(Matrix& scores) {
  for (int r = 0; r < scores.rows(); ++r) {
    auto row = scores.row(r);
    row = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
}

Matrix layer_norm(const Matrix& x, const Vector& gain, const Vector& bias) {
  Matrix out(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double variance = (x.row(r).array() - mean).square().mean();
    out.row(r) = (((x.row(r).array() - mean) / std::sqrt(variance + kLayerNormEpsilon)) *
                  gain.transpose().array()) +
                 bias.transpose().array();
  }
  return out;
}

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(0.7978845608028654 * (x + 0.044715 * x * x * x)));
}

}  // namespace

Pooling pooling_from_string(const std::string& name) {
  if (name == "start_token") return Pooling::kStartToken;
  if (name == "mean") return Pooling::kMean;
  throw Error("unknown pooling mode: " + name);
}

std::string to_string(Pooling pooling) {
  return pooling == Pooling::kStartToken ? "start_token" : "mean";
}

void EncoderConfig::validate() const {
  if (layer_count < 1) throw Error("encoder config: layer_count must be >= 1");
  if (head_count < 1) throw Error("encoder config: head_count must be >= 1");
  if (model_dim % head_count != 0)
    throw Error("encoder config: model_dim must be divisible by head_count");
  if (max_positions < 3) throw Error("encoder config: max_positions too small");
  if (attention_bias.kind == AttentionBias::Kind::kFrontLoaded &&
      attention_bias.strength < 0.0)
    throw Error("encoder config: front_loaded strength must be >= 0");
}

std::string EncoderConfig::model_id() const {
  std::ostringstream os;
  os << "mini-L" << layer_count << "-H" << head_count << "-d" << model_dim << "-s"
     << init_seed << "-" << to_string(pooling);
  if (attention_bias.kind == AttentionBias::Kind::kFrontLoaded)
    os << "-fl" << attention_bias.strength;
  if (bag_of_tokens) os << "-bag";
  return os.str();
}

Matrix sinusoidal_positions(int length, int dim) {
  Matrix pe(length, dim);
  for (int p = 0; p < length; ++p) {
    for (int i = 0; i < dim; i += 2) {
      const double rate = std::pow(10000.0, static_cast<double>(i) / dim);
      pe(p, i) = std::sin(p / rate);
      if (i + 1 < dim) pe(p, i + 1) = std::cos(p / rate);
    }
  }
  return pe;
}

Encoder::Encoder(EncoderConfig config) : config_(std::move(config)) {
  config_.validate();
  const int d = config_.model_dim;
  const int hidden = 4 * d;
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(d));

  token_embeddings_ = random_matrix(config_.tokenizer.vocab_size, d, 1.0,
                                    mix_seed(config_.init_seed, 0xe3bu));
  layers_.reserve(config_.layer_count);
  for (int layer = 0; layer < config_.layer_count; ++layer) {
    const auto sub = [&](std::uint64_t slot) {
      return mix_seed(mix_seed(config_.init_seed, static_cast<std::uint64_t>(layer) + 1),
                      slot);
    };
    LayerWeights w;
    w.wq = random_matrix(d, d, proj_std, sub(1));
    w.wk = random_matrix(d, d, proj_std, sub(2));
    w.wv = random_matrix(d, d, proj_std, sub(3));
    w.wo = random_matrix(d, d, 0.5 * proj_std, sub(4));
    w.ff1 = random_matrix(d, hidden, proj_std, sub(5));
    w.ff2 = random_matrix(hidden, d, 0.5 / std::sqrt(static_cast<double>(hidden)), sub(6));
    w.ff1_bias = Vector::Zero(hidden);
    w.ff2_bias = Vector::Zero(d);
    w.ln1_gain = Vector::Ones(d);
    w.ln1_bias = Vector::Zero(d);
    w.ln2_gain = Vector::Ones(d);
    w.ln2_bias = Vector::Zero(d);
    layers_.push_back(std::move(w));
  }
}

EncodeOutput Encoder::encode(const Tokenized& tokens,
                             const std::optional<CalibrationConfig>& calibration,
                             bool capture_layer_states) const {
  const int length = tokens.length();
  if (length < 3) throw Error("encode: sequence must contain at least one content token");
  if (length > config_.max_positions)
    throw Error("encode: sequence length " + std::to_string(length) +
                " exceeds max_positions " + std::to_string(config_.max_positions));

  std::unordered_set<int> calibrated_layers;
  std::optional<BasketPartition> partition;
  if (calibration) {
    for (int layer : calibration->calibrated_layers) {
      if (layer < 1 || layer > config_.layer_count)
        throw Error("encode: calibrated layer " + std::to_string(layer) +
                    " outside {1.." + std::to_string(config_.layer_count) + "}");
      calibrated_layers.insert(layer);
    }
    if (config_.bag_of_tokens && !calibrated_layers.empty())
      throw Error("encode: calibration is undefined for the bag-of-tokens test mode");
    partition = partition_keys(length, calibration->basket_size);
  }

  encode_calls_.fetch_add(1, std::memory_order_relaxed);

  const int d = config_.model_dim;
  const int heads = config_.head_count;
  const int dk = d / heads;

  Matrix x(length, d);
  for (int p = 0; p < length; ++p) {
    const int id = tokens.ids[p];
    if (id < 0 || id >= config_.tokenizer.vocab_size)
      throw Error("encode: token id out of range");
    x.row(p) = token_embeddings_.row(id);
  }
  if (!config_.bag_of_tokens) x += sinusoidal_positions(length, d);

  EncodeOutput out;
  out.start_attention.reserve(layers_.size());
  if (capture_layer_states) out.layer_states.reserve(layers_.size());

  for (std::size_t layer = 0; layer < layers_.size(); ++layer) {
    const LayerWeights& w = layers_[layer];
    Matrix attn_rows(heads, length);
    Matrix attn_out(length, d);

    if (config_.bag_of_tokens) {
      // Uniform attention: every query receives the per-head value mean.
      const Matrix v = x * w.wv;
      for (int h = 0; h < heads; ++h)
        attn_out.middleCols(h * dk, dk) =
            v.middleCols(h * dk, dk).colwise().mean().replicate(length, 1);
      attn_rows.setConstant(1.0 / length);
    } else {
      const Matrix q = x * w.wq;
      const Matrix k = x * w.wk;
      const Matrix v = x * w.wv;
      for (int h = 0; h < heads; ++h) {
        Matrix scores = q.middleCols(h * dk, dk) * k.middleCols(h * dk, dk).transpose() /
                        std::sqrt(static_cast<double>(dk));
        if (config_.attention_bias.kind == AttentionBias::Kind::kFrontLoaded && length > 2) {
          // Decays over the non-pooling keys; key 0 is exempt so the
          // injected preference shifts content inflow rather than the
          // pooling token's self-attention.
          const double strength = config_.attention_bias.strength;
          for (int p = 1; p < length; ++p)
            scores(0, p) +=
                strength * (1.0 - static_cast<double>(p - 1) / (length - 2));
        }
        softmax_rows_in_place(scores);
        if (calibrated_layers.count(static_cast<int>(layer) + 1))
          scores.row(0) =
              calibrate_row(scores.row(0).transpose(), *partition, calibration->mass_mode)
                  .transpose();
        attn_rows.row(h) = scores.row(0);
        attn_out.middleCols(h * dk, dk) = scores * v.middleCols(h * dk, dk);
      }
    }

    out.start_attention.push_back(std::move(attn_rows));
    x = layer_norm(x + attn_out * w.wo, w.ln1_gain, w.ln1_bias);
    Matrix hidden = (x * w.ff1).rowwise() + w.ff1_bias.transpose();
    hidden = hidden.unaryExpr([](double v) { return gelu(v); });
    x = layer_norm(x + ((hidden * w.ff2).rowwise() + w.ff2_bias.transpose()),
                   w.ln2_gain, w.ln2_bias);
    if (capture_layer_states) out.layer_states.push_back(x);
  }

  out.hidden_states = std::move(x);
  out.span_map = tokens.span_map;
  out.pooling = config_.pooling;
  out.calibration_applied = calibration;
  if (config_.pooling == Pooling::kStartToken) {
    out.pooled = out.hidden_states.row(0).transpose();
  } else {
    out.pooled = out.hidden_states.middleRows(1, length - 2).colwise().mean().transpose();
  }
  return out;
}

Vector Encoder::embed_pieces(std::span<const TextPiece> pieces,
                             const std::optional<CalibrationConfig>& calibration) const {
  return encode(tokenize(pieces, config_.tokenizer), calibration).pooled;
}

Vector Encoder::embed_document(const DocumentSpec& document, const SegmentSet& set,
                               const Corpus& corpus,
                               const std::optional<CalibrationConfig>& calibration) const {
  const auto pieces = document_pieces(document, set, corpus);
  return embed_pieces(pieces, calibration);
}

Vector Encoder::embed_segment_standalone(
    const Segment& segment, const std::optional<CalibrationConfig>& calibration) const {
  const TextPiece piece{segment.text, segment.language};
  return embed_pieces(std::span<const TextPiece>(&piece, 1), calibration);
}

Vector contextualized_segment_embedding(const EncodeOutput& out, int position_index) {
  if (out.pooling != Pooling::kMean)
    throw Error(
        "contextualized_segment_embedding: requires a mean-pooled model; "
        "start-token models do not preserve token-level semantics");
  if (position_index < 0 ||
      position_index >= static_cast<int>(out.span_map.spans.size()))
    throw Error("contextualized_segment_embedding: invalid position index");
  const TokenSpan& span = out.span_map.spans[position_index];
  return out.hidden_states.middleRows(span.begin, span.count).colwise().mean().transpose();
}

}  // namespace embaudit
