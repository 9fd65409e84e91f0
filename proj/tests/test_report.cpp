#include <doctest.h>

#include <string>

#include "embaudit/report.hpp"

using namespace embaudit;

namespace {

int count_occurrences(const std::string& haystack, const std::string& needle) {
  int count = 0;
  for (std::size_t at = haystack.find(needle); at != std::string::npos;
       at = haystack.find(needle, at + needle.size()))
    ++count;
  return count;
}

PositionAggregate aggregate(const std::string& group, int position, double mean) {
  PositionAggregate a;
  a.group = group;
  a.position = position;
  a.mean = mean;
  a.count = 10;
  return a;
}

}  // namespace

TEST_CASE("profile SVG has one polyline per variant") {
  std::vector<PositionAggregate> aggregates{
      aggregate("none", 1, 0.9),       aggregate("none", 2, 0.6),
      aggregate("none", 3, 0.55),      aggregate("calibrated", 1, 0.8),
      aggregate("calibrated", 2, 0.75), aggregate("calibrated", 3, 0.72)};
  const std::string svg = render_profile_svg(aggregates);
  CHECK(count_occurrences(svg, "<polyline") == 2);
  CHECK(count_occurrences(svg, "<circle") == 6);
  CHECK(svg.find("</svg>") != std::string::npos);

  // Byte determinism.
  CHECK(render_profile_svg(aggregates) == svg);
}

TEST_CASE("profile SVG guards") {
  CHECK_THROWS_AS(render_profile_svg({}), Error);
  std::vector<PositionAggregate> single{aggregate("none", 1, 0.9)};
  CHECK_THROWS_AS(render_profile_svg(single), Error);
}

TEST_CASE("attention SVG separates special tokens") {
  AttentionProfile profile;
  profile.start_mass = 0.4;
  profile.basket_mass = {0.3, 0.2};
  profile.end_mass = 0.1;
  profile.layer_descriptor = "mean over layers {1} and all heads";
  const std::string svg = render_attention_svg(profile);
  CHECK(count_occurrences(svg, "<rect") == 5);  // background + 4 bars
  CHECK(svg.find("&lt;s&gt;") != std::string::npos);
  CHECK(svg.find("&lt;/s&gt;") != std::string::npos);
  CHECK(render_attention_svg(profile) == svg);

  AttentionProfile empty;
  CHECK_THROWS_AS(render_attention_svg(empty), Error);
}

TEST_CASE("OLS table formats significance markers") {
  OlsFit fit;
  fit.kind = SimilarityRecord::Kind::kRepresentation;
  fit.n_positions = 3;
  fit.coefficients = Vector::Zero(3);
  fit.coefficients << 0.85, -0.35, -0.25;
  fit.standard_errors = Vector::Constant(3, 0.01);
  fit.t_statistics = Vector::Zero(3);
  fit.t_statistics << 85.0, -35.0, -25.0;
  fit.p_values = Vector::Zero(3);
  fit.p_values << 1e-6, 0.0005, 0.03;
  fit.cluster_count = 8;
  fit.observation_count = 48;

  std::vector<LabeledFit> fits{{"mono-en-n3", "none", fit}};
  const std::string table = format_ols_table(fits);
  CHECK(table.find("mono-en-n3") != std::string::npos);
  CHECK(table.find("***") != std::string::npos);  // p=2 row at 0.0005
  CHECK(count_occurrences(table, "\n") >= 5);
  CHECK(format_ols_table(fits) == table);

  CHECK_THROWS_AS(format_ols_table({}), Error);
}
