#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "embaudit/encoder.hpp"
#include "embaudit/metrics.hpp"

using namespace embaudit;

namespace {

EncoderConfig small_config() {
  EncoderConfig config;
  config.layer_count = 4;
  config.head_count = 2;
  config.model_dim = 16;
  config.max_positions = 128;
  config.init_seed = 123;
  return config;
}

std::vector<TextPiece> three_pieces() {
  return {{"alpha bravo charlie delta", "en"},
          {"echo foxtrot golf", "en"},
          {"hotel india juliet kilo lima", "en"}};
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c)
      if (a(r, c) != b(r, c)) return false;
  return true;
}

}  // namespace

TEST_CASE("encode output shapes and attention distributions") {
  const Encoder encoder(small_config());
  const auto tokens = tokenize(three_pieces(), encoder.config().tokenizer);
  const auto out = encoder.encode(tokens);

  const int length = tokens.length();
  CHECK(out.hidden_states.rows() == length);
  CHECK(out.hidden_states.cols() == 16);
  CHECK(out.pooled.size() == 16);
  REQUIRE(out.start_attention.size() == 4);
  for (const auto& rows : out.start_attention) {
    REQUIRE(rows.rows() == 2);
    REQUIRE(rows.cols() == length);
    for (int h = 0; h < rows.rows(); ++h) {
      CHECK(rows.row(h).minCoeff() >= 0.0);
      CHECK(std::abs(rows.row(h).sum() - 1.0) < 1e-6);
    }
  }
  CHECK(out.span_map.spans.size() == 3);
}

TEST_CASE("encode is bitwise deterministic") {
  const Encoder encoder(small_config());
  const auto tokens = tokenize(three_pieces(), encoder.config().tokenizer);
  const auto a = encoder.encode(tokens);
  const auto b = encoder.encode(tokens);
  CHECK(bitwise_equal(a.hidden_states, b.hidden_states));

  // A separately constructed encoder with the same seed agrees too.
  const Encoder rebuilt(small_config());
  const auto c = rebuilt.encode(tokens);
  CHECK(bitwise_equal(a.hidden_states, c.hidden_states));
}

TEST_CASE("empty calibrated layer set is a bitwise no-op") {
  const Encoder encoder(small_config());
  const auto tokens = tokenize(three_pieces(), encoder.config().tokenizer);

  CalibrationConfig noop;
  noop.basket_size = 4;
  noop.calibrated_layers = {};

  const auto plain = encoder.encode(tokens);
  const auto with_noop = encoder.encode(tokens, noop);
  CHECK(bitwise_equal(plain.hidden_states, with_noop.hidden_states));
  for (int i = 0; i < plain.pooled.size(); ++i)
    CHECK(plain.pooled(i) == with_noop.pooled(i));
}

TEST_CASE("mean pooling of a one-token document is that token's state") {
  auto config = small_config();
  config.pooling = Pooling::kMean;
  const Encoder encoder(config);
  const std::vector<TextPiece> single{{"solo", "en"}};
  const auto out = encoder.encode(tokenize(single, config.tokenizer));
  REQUIRE(out.sequence_length() == 3);
  for (int i = 0; i < out.pooled.size(); ++i)
    CHECK(out.pooled(i) == doctest::Approx(out.hidden_states(1, i)).epsilon(1e-12));

  // Contextualized embedding of the only segment coincides as well.
  const Vector ctx = contextualized_segment_embedding(out, 0);
  for (int i = 0; i < ctx.size(); ++i)
    CHECK(ctx(i) == doctest::Approx(out.pooled(i)).epsilon(1e-12));
}

TEST_CASE("mean-pooled document equals token-weighted mean of contextualized segments") {
  auto config = small_config();
  config.pooling = Pooling::kMean;
  const Encoder encoder(config);
  const auto pieces = three_pieces();
  const auto tokens = tokenize(pieces, config.tokenizer);
  const auto out = encoder.encode(tokens);

  Vector weighted = Vector::Zero(config.model_dim);
  int total = 0;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const auto& span = out.span_map.spans[i];
    weighted += span.count * contextualized_segment_embedding(out, static_cast<int>(i));
    total += span.count;
  }
  weighted /= total;
  for (int i = 0; i < weighted.size(); ++i)
    CHECK(std::abs(weighted(i) - out.pooled(i)) < 1e-6);
}

TEST_CASE("contextualized embeddings guard pooling mode and position") {
  const Encoder start_token(small_config());
  const auto out = start_token.encode(tokenize(three_pieces(),
                                               start_token.config().tokenizer));
  CHECK_THROWS_AS(contextualized_segment_embedding(out, 0), Error);

  auto config = small_config();
  config.pooling = Pooling::kMean;
  const Encoder mean_pooled(config);
  const auto mean_out = mean_pooled.encode(tokenize(three_pieces(), config.tokenizer));
  CHECK_THROWS_AS(contextualized_segment_embedding(mean_out, 3), Error);
  CHECK_THROWS_AS(contextualized_segment_embedding(mean_out, -1), Error);
}

TEST_CASE("standalone embeddings depend only on the segment") {
  const Encoder encoder(small_config());
  Segment segment{"s1", "en", "t", "golf hotel india", count_tokens("golf hotel india")};
  const Vector once = encoder.embed_segment_standalone(segment);
  const Vector twice = encoder.embed_segment_standalone(segment);
  CHECK(cosine(once, twice) == doctest::Approx(1.0));
  for (int i = 0; i < once.size(); ++i) CHECK(once(i) == twice(i));
}

TEST_CASE("sequence length limits are enforced") {
  auto config = small_config();
  config.max_positions = 8;
  const Encoder encoder(config);
  const std::vector<TextPiece> long_piece{{"a b c d e f g h i j", "en"}};
  CHECK_THROWS_AS(encoder.encode(tokenize(long_piece, config.tokenizer)), Error);
}

TEST_CASE("front-loaded bias concentrates pooling-token attention early") {
  auto config = small_config();
  config.attention_bias = AttentionBias::front_loaded(4.0);
  const Encoder biased(config);
  const Encoder plain(small_config());

  std::vector<TextPiece> pieces;
  std::string text;
  for (int w = 0; w < 24; ++w) text += (w ? " w" : "w") + std::to_string(w);
  pieces.push_back({text, "en"});
  pieces.push_back({text + " tail", "en"});
  const auto tokens = tokenize(pieces, config.tokenizer);

  const auto biased_out = biased.encode(tokens);
  const int length = tokens.length();
  const auto partition = partition_keys(length, 8);
  std::vector<int> all_layers;
  for (int l = 1; l <= config.layer_count; ++l) all_layers.push_back(l);
  const auto profile = basket_profile(biased_out.start_attention, partition, all_layers);

  // First content basket holds strictly more than its uniform share.
  const double uniform_share =
      static_cast<double>(partition.baskets[1].size()) / length;
  CHECK(profile.basket_mass[0] > uniform_share);

  // And strictly more than the same basket under the unbiased encoder.
  const auto plain_profile =
      basket_profile(plain.encode(tokens).start_attention, partition, all_layers);
  CHECK(profile.basket_mass[0] > plain_profile.basket_mass[0]);
}

TEST_CASE("bag-of-tokens mode is permutation invariant") {
  auto config = small_config();
  config.bag_of_tokens = true;
  SUBCASE("start-token pooling") {}
  SUBCASE("mean pooling") { config.pooling = Pooling::kMean; }
  const Encoder encoder(config);

  const auto pieces = three_pieces();
  std::vector<TextPiece> permuted{pieces[2], pieces[0], pieces[1]};
  const Vector a = encoder.embed_pieces(pieces);
  const Vector b = encoder.embed_pieces(permuted);
  for (int i = 0; i < a.size(); ++i) CHECK(std::abs(a(i) - b(i)) < 1e-6);
}

TEST_CASE("calibration leaves layers below the calibrated range untouched") {
  auto config = small_config();
  config.attention_bias = AttentionBias::front_loaded(2.0);
  const Encoder encoder(config);
  const auto tokens = tokenize(three_pieces(), config.tokenizer);

  CalibrationConfig calibration;
  calibration.basket_size = 4;
  calibration.calibrated_layers = {3, 4};

  const auto base = encoder.encode(tokens, std::nullopt, true);
  const auto calibrated = encoder.encode(tokens, calibration, true);
  REQUIRE(base.layer_states.size() == 4);
  REQUIRE(calibrated.layer_states.size() == 4);
  // Layers 1 and 2 are bitwise identical; layer 3 onward diverges.
  CHECK(bitwise_equal(base.layer_states[0], calibrated.layer_states[0]));
  CHECK(bitwise_equal(base.layer_states[1], calibrated.layer_states[1]));
  CHECK_FALSE(bitwise_equal(base.layer_states[2], calibrated.layer_states[2]));

  // Calibrated layers carry equalized basket masses on the <s> row.
  const auto partition = partition_keys(tokens.length(), 4);
  for (int layer : calibration.calibrated_layers) {
    const Matrix& rows = calibrated.start_attention[layer - 1];
    for (int h = 0; h < rows.rows(); ++h) {
      for (const auto& basket : partition.baskets) {
        const double mass = rows.row(h).segment(basket.begin, basket.size()).sum();
        CHECK(mass == doctest::Approx(1.0 / partition.count()).epsilon(1e-9));
      }
    }
  }
  CHECK(calibrated.calibration_applied.has_value());
}

TEST_CASE("model ids distinguish configurations") {
  auto config = small_config();
  const std::string base_id = config.model_id();
  config.attention_bias = AttentionBias::front_loaded(2.0);
  CHECK(config.model_id() != base_id);
  config.bag_of_tokens = true;
  CHECK(config.model_id().find("bag") != std::string::npos);
}
