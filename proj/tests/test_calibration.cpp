#include <doctest.h>

#include <cmath>
#include <random>

#include "embaudit/calibration.hpp"

using namespace embaudit;

namespace {

// Independent oracle: renormalize every basket separately to its target
// mass, element by element.
Vector per_basket_renormalization_oracle(const Vector& row,
                                         const BasketPartition& partition,
                                         MassMode mode) {
  Vector out(row.size());
  const double m = partition.count();
  for (const auto& basket : partition.baskets) {
    double mass = 0.0;
    for (int k = basket.begin; k < basket.end; ++k) mass += row(k);
    const double target = mode == MassMode::kUniformPerBasket
                              ? 1.0 / m
                              : static_cast<double>(basket.size()) / row.size();
    for (int k = basket.begin; k < basket.end; ++k) out(k) = row(k) / mass * target;
  }
  return out;
}

Vector random_softmax_row(std::mt19937_64& rng, int length) {
  std::uniform_real_distribution<double> logit(-4.0, 4.0);
  Vector row(length);
  for (int i = 0; i < length; ++i) row(i) = std::exp(logit(rng));
  row /= row.sum();
  return row;
}

}  // namespace

TEST_CASE("partition_keys basket layout and count formula") {
  const auto partition = partition_keys(4, 2);
  REQUIRE(partition.count() == 3);
  CHECK(partition.baskets[0].begin == 0);
  CHECK(partition.baskets[0].end == 1);
  CHECK(partition.baskets[1].begin == 1);
  CHECK(partition.baskets[1].end == 3);
  CHECK(partition.baskets[2].begin == 3);
  CHECK(partition.baskets[2].end == 4);

  const auto single = partition_keys(1, 128);
  REQUIRE(single.count() == 1);
  CHECK(single.baskets[0].size() == 1);

  CHECK(partition_keys(641, 128).count() == 6);  // ceil(640/128)+1
}

TEST_CASE("partition_keys covers every key exactly once") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int length = 1 + static_cast<int>(rng() % 700);
    const int basket = 1 + static_cast<int>(rng() % 140);
    const auto partition = partition_keys(length, basket);
    CHECK(partition.count() ==
          (length - 1 + basket - 1) / basket + 1);
    int next = 0;
    for (const auto& range : partition.baskets) {
      CHECK(range.begin == next);
      CHECK(range.end > range.begin);
      next = range.end;
    }
    CHECK(next == length);
  }
  CHECK_THROWS_AS(partition_keys(0, 2), Error);
  CHECK_THROWS_AS(partition_keys(4, 0), Error);
}

TEST_CASE("calibrate_row matches the hand-computed redistribution") {
  Vector row(4);
  row << 0.4, 0.3, 0.2, 0.1;
  const auto partition = partition_keys(4, 2);
  const Vector out = calibrate_row(row, partition);
  CHECK(out(0) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(out(1) == doctest::Approx(1.0 / 3 * 0.3 / 0.5).epsilon(1e-12));
  CHECK(out(2) == doctest::Approx(1.0 / 3 * 0.2 / 0.5).epsilon(1e-12));
  CHECK(out(3) == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("calibrate_row fixed points") {
  // Already basket-uniform input is returned unchanged.
  Vector row(4);
  row << 1.0 / 3, 0.2, 1.0 / 3 - 0.2, 1.0 / 3;
  const auto partition = partition_keys(4, 2);
  const Vector out = calibrate_row(row, partition);
  for (int i = 0; i < 4; ++i) CHECK(out(i) == doctest::Approx(row(i)).epsilon(1e-12));

  // Uniform row with all baskets of size one (B=1) is untouched.
  const int length = 9;
  Vector uniform = Vector::Constant(length, 1.0 / length);
  const Vector calibrated = calibrate_row(uniform, partition_keys(length, 1));
  for (int i = 0; i < length; ++i)
    CHECK(calibrated(i) == doctest::Approx(1.0 / length).epsilon(1e-12));
}

TEST_CASE("calibrate_row error paths") {
  Vector row(4);
  row << 0.25, 0.25, 0.25, 0.25;
  CHECK_THROWS_AS(calibrate_row(row, partition_keys(5, 2)), Error);

  Vector zero_basket(4);
  zero_basket << 0.5, 0.0, 0.0, 0.5;
  CHECK_THROWS_AS(calibrate_row(zero_basket, partition_keys(4, 2)), Error);
}

TEST_CASE("calibrate_row properties against the oracle") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 300; ++trial) {
    const int length = 2 + static_cast<int>(rng() % 63);
    const int basket = 1 + static_cast<int>(rng() % 64);
    const auto mode = trial % 3 == 0 ? MassMode::kSizeProportional
                                     : MassMode::kUniformPerBasket;
    const Vector row = random_softmax_row(rng, length);
    const auto partition = partition_keys(length, basket);
    const Vector out = calibrate_row(row, partition, mode);

    // Oracle equivalence.
    const Vector expected = per_basket_renormalization_oracle(row, partition, mode);
    for (int i = 0; i < length; ++i)
      CHECK(std::abs(out(i) - expected(i)) < 1e-12);

    // Valid distribution.
    CHECK(out.minCoeff() >= 0.0);
    CHECK(std::abs(out.sum() - 1.0) < 1e-9);

    // Per-basket target mass.
    for (const auto& range : partition.baskets) {
      const double mass = out.segment(range.begin, range.size()).sum();
      const double target = mode == MassMode::kUniformPerBasket
                                ? 1.0 / partition.count()
                                : static_cast<double>(range.size()) / length;
      CHECK(std::abs(mass - target) < 1e-9);
    }

    // Intra-basket ratios preserved.
    for (const auto& range : partition.baskets)
      for (int i = range.begin; i < range.end; ++i)
        for (int j = i + 1; j < range.end; ++j)
          CHECK(out(i) / out(j) == doctest::Approx(row(i) / row(j)).epsilon(1e-9));

    // Idempotence.
    const Vector twice = calibrate_row(out, partition, mode);
    for (int i = 0; i < length; ++i)
      CHECK(twice(i) == doctest::Approx(out(i)).epsilon(1e-9));
  }
}

TEST_CASE("variant id format") {
  CalibrationConfig config;
  config.basket_size = 128;
  config.calibrated_layers = {7, 8, 9, 10, 11, 12};
  CHECK(config.variant_id() == "B128-L7..12-uniform");

  config.calibrated_layers = {12};
  config.mass_mode = MassMode::kSizeProportional;
  CHECK(config.variant_id() == "B128-L12..12-proportional");

  config.calibrated_layers = {2, 5};
  config.mass_mode = MassMode::kUniformPerBasket;
  CHECK(config.variant_id() == "B128-L2,5-uniform");

  config.id = "custom";
  CHECK(config.variant_id() == "custom");
}

TEST_CASE("basket_profile separates special tokens") {
  Matrix rows(1, 4);
  rows << 0.4, 0.3, 0.2, 0.1;
  const auto partition = partition_keys(4, 2);
  const auto profile = basket_profile({rows}, partition, {1});
  CHECK(profile.start_mass == doctest::Approx(0.4));
  REQUIRE(profile.basket_mass.size() == 1);  // the </s>-only tail basket is dropped
  CHECK(profile.basket_mass[0] == doctest::Approx(0.5));
  CHECK(profile.end_mass == doctest::Approx(0.1));
  CHECK(profile.total() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("basket_profile averages heads and layers") {
  std::mt19937_64 rng(3);
  const int length = 11;
  Matrix layer_rows(3, length);
  for (int h = 0; h < 3; ++h) layer_rows.row(h) = random_softmax_row(rng, length).transpose();
  // Identical rows across layers: averaging is a no-op.
  const std::vector<Matrix> rows_per_layer{layer_rows, layer_rows, layer_rows};
  const auto partition = partition_keys(length, 4);
  const auto one = basket_profile(rows_per_layer, partition, {2});
  const auto all = basket_profile(rows_per_layer, partition, {1, 2, 3});
  REQUIRE(one.basket_mass.size() == all.basket_mass.size());
  for (std::size_t i = 0; i < one.basket_mass.size(); ++i)
    CHECK(one.basket_mass[i] == doctest::Approx(all.basket_mass[i]).epsilon(1e-12));
  CHECK(all.total() == doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS_AS(basket_profile(rows_per_layer, partition, {}), Error);
  CHECK_THROWS_AS(basket_profile(rows_per_layer, partition, {4}), Error);
}
