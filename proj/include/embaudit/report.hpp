#pragma once

#include <span>
#include <string>
#include <vector>

#include "embaudit/calibration.hpp"
#include "embaudit/metrics.hpp"
#include "embaudit/stats.hpp"

namespace embaudit {

struct SvgStyle {
  int width = 640;
  int height = 400;
  std::string title;
};

/// Per-position profile line chart, one polyline per group. Byte-
/// deterministic for a fixed input.
std::string render_profile_svg(std::span<const PositionAggregate> aggregates,
                               const SvgStyle& style = {});

/// Basket-mass bar chart with the special-token bars set apart from the
/// content baskets.
std::string render_attention_svg(const AttentionProfile& profile,
                                 const SvgStyle& style = {});

/// Fixed-width text table of OLS results with significance markers
/// (alphas descending, e.g. {0.05, 0.01, 0.001} -> *, **, ***).
std::string format_ols_table(std::span<const LabeledFit> fits,
                             std::vector<double> alphas = {0.05, 0.01, 0.001});

}  // namespace embaudit
