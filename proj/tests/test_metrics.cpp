#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "embaudit/encoder.hpp"
#include "embaudit/metrics.hpp"

using namespace embaudit;

TEST_CASE("cosine basics") {
  Vector x(3);
  x << 0.3, -1.2, 2.0;
  CHECK(cosine(x, x) == doctest::Approx(1.0));
  CHECK(cosine(x, Vector(-x)) == doctest::Approx(-1.0));

  Vector e1(2), e2(2);
  e1 << 1, 0;
  e2 << 0, 1;
  CHECK(cosine(e1, e2) == doctest::Approx(0.0));

  Vector zero = Vector::Zero(3);
  CHECK_THROWS_AS(cosine(x, zero), Error);
  Vector shorter(2);
  shorter << 1, 2;
  CHECK_THROWS_AS(cosine(x, shorter), Error);
}

TEST_CASE("positional fairness scores carry metadata and positions") {
  Vector doc(3);
  doc << 1, 0, 0;
  std::vector<Vector> standalone(3, Vector(3));
  standalone[0] << 1, 0, 0;
  standalone[1] << 0, 1, 0;
  standalone[2] << 1, 1, 0;

  RecordMeta meta{"set-a", "p123", 3, "mono-en", "model-x", "none"};
  const auto records = positional_fairness_scores(doc, standalone, meta);
  REQUIRE(records.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(records[i].position == i + 1);
    CHECK(records[i].kind == SimilarityRecord::Kind::kRepresentation);
    CHECK(records[i].segment_set_id == "set-a");
    CHECK(records[i].permutation_id == "p123");
    CHECK(records[i].language_config_id == "mono-en");
    CHECK(std::abs(records[i].value) <= 1.0 + 1e-9);
  }
  CHECK(records[0].value == doctest::Approx(1.0));

  meta.n = 2;
  CHECK_THROWS_AS(positional_fairness_scores(doc, standalone, meta), Error);
}

TEST_CASE("single-segment document scores one under mean pooling") {
  EncoderConfig config;
  config.layer_count = 3;
  config.head_count = 2;
  config.model_dim = 16;
  config.pooling = Pooling::kMean;
  config.init_seed = 5;
  const Encoder encoder(config);

  Segment segment{"s", "en", "t", "papa quebec romeo sierra", 4};
  const Vector standalone = encoder.embed_segment_standalone(segment);

  const std::vector<TextPiece> pieces{{segment.text, segment.language}};
  const auto out = encoder.encode(tokenize(pieces, config.tokenizer));

  RecordMeta meta{"set", "p1", 1, "mono-en", encoder.model_id(), "none"};
  const auto sim1 =
      positional_fairness_scores(out.pooled, std::vector<Vector>{standalone}, meta);
  CHECK(sim1[0].value == doctest::Approx(1.0).epsilon(1e-6));

  const Vector ctx = contextualized_segment_embedding(out, 0);
  const auto sim2 = information_retention_scores(std::vector<Vector>{standalone},
                                                 std::vector<Vector>{ctx}, meta);
  REQUIRE(sim2.size() == 1);
  CHECK(sim2[0].kind == SimilarityRecord::Kind::kRetention);
  CHECK(sim2[0].value == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("aggregate_by_position groups and averages") {
  std::vector<SimilarityRecord> records;
  for (double value : {0.9, 0.7}) {
    SimilarityRecord r;
    r.position = 1;
    r.value = value;
    r.calibration_id = "none";
    records.push_back(r);
  }
  SimilarityRecord other;
  other.position = 1;
  other.value = 0.5;
  other.calibration_id = "B2-L1..2-uniform";
  records.push_back(other);

  const auto aggregates = aggregate_by_position(records);
  REQUIRE(aggregates.size() == 2);  // two calibration groups
  const auto& calibrated = aggregates[0].group.find("B2") != std::string::npos
                               ? aggregates[0]
                               : aggregates[1];
  const auto& baseline = aggregates[0].group.find("B2") != std::string::npos
                             ? aggregates[1]
                             : aggregates[0];
  CHECK(baseline.mean == doctest::Approx(0.8));
  CHECK(baseline.count == 2);
  CHECK(calibrated.mean == doctest::Approx(0.5));
  CHECK(calibrated.count == 1);

  CHECK_THROWS_AS(aggregate_by_position({}), Error);
}

TEST_CASE("records CSV round-trips with quoting") {
  std::vector<SimilarityRecord> records;
  SimilarityRecord r;
  r.segment_set_id = "set,with,commas";
  r.permutation_id = "p\"quoted\"";
  r.position = 2;
  r.kind = SimilarityRecord::Kind::kRetention;
  r.value = -0.12345678901234567;
  r.n = 3;
  r.language_config_id = "mixed-de-en";
  r.model_id = "model";
  r.calibration_id = "none";
  records.push_back(r);

  const auto path = std::filesystem::temp_directory_path() / "embaudit_records_test.csv";
  write_records_csv(path, records);
  const auto loaded = read_records_csv(path);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].segment_set_id == r.segment_set_id);
  CHECK(loaded[0].permutation_id == r.permutation_id);
  CHECK(loaded[0].position == r.position);
  CHECK(loaded[0].kind == r.kind);
  CHECK(loaded[0].value == doctest::Approx(r.value).epsilon(1e-15));
  CHECK(loaded[0].n == r.n);
  std::filesystem::remove(path);
}

TEST_CASE("csv escaping is RFC-4180 style") {
  CHECK(csv_escape("plain") == "plain");
  CHECK(csv_escape("a,b") == "\"a,b\"");
  CHECK(csv_escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
  const auto fields = parse_csv_line("a,\"b,c\",\"d\"\"e\"");
  REQUIRE(fields.size() == 3);
  CHECK(fields[1] == "b,c");
  CHECK(fields[2] == "d\"e");
}
