#include "embaudit/report.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

namespace embaudit {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string fmt(double value) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << value;
  return os.str();
}

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_profile_svg(std::span<const PositionAggregate> aggregates,
                               const SvgStyle& style) {
  if (aggregates.empty()) throw Error("render_profile_svg: empty input");

  std::map<std::string, std::map<int, const PositionAggregate*>> groups;
  int max_position = 1;
  double lo = aggregates[0].mean, hi = aggregates[0].mean;
  for (const auto& aggregate : aggregates) {
    groups[aggregate.group][aggregate.position] = &aggregate;
    max_position = std::max(max_position, aggregate.position);
    lo = std::min(lo, aggregate.mean);
    hi = std::max(hi, aggregate.mean);
  }
  for (const auto& [name, points] : groups)
    if (points.size() < 2)
      throw Error("render_profile_svg: group '" + name + "' has fewer than 2 positions");
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.08 * (hi - lo);
  lo -= pad;
  hi += pad;

  const double width = style.width, height = style.height;
  const double left = 56, right = width - 16, top = 40, bottom = height - 36;
  const auto x_of = [&](int position) {
    return left + (right - left) * (position - 1) / std::max(1, max_position - 1);
  };
  const auto y_of = [&](double value) {
    return bottom - (bottom - top) * (value - lo) / (hi - lo);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << style.width
      << "\" height=\"" << style.height << "\" viewBox=\"0 0 " << style.width << " "
      << style.height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!style.title.empty())
    svg << "<text x=\"" << fmt(width / 2) << "\" y=\"20\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"14\">" << xml_escape(style.title)
        << "</text>\n";

  // axes
  svg << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(bottom) << "\" x2=\""
      << fmt(right) << "\" y2=\"" << fmt(bottom) << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(top) << "\" x2=\"" << fmt(left)
      << "\" y2=\"" << fmt(bottom) << "\" stroke=\"black\"/>\n";
  for (int p = 1; p <= max_position; ++p)
    svg << "<text x=\"" << fmt(x_of(p)) << "\" y=\"" << fmt(bottom + 18)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << p
        << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double value = lo + (hi - lo) * i / 4;
    svg << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(y_of(value) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
        << fmt(value) << "</text>\n";
  }

  int series = 0;
  for (const auto& [name, points] : groups) {
    const char* color = kPalette[series % (sizeof(kPalette) / sizeof(kPalette[0]))];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    bool first = true;
    for (const auto& [position, aggregate] : points) {
      if (!first) svg << ' ';
      svg << fmt(x_of(position)) << ',' << fmt(y_of(aggregate->mean));
      first = false;
    }
    svg << "\"/>\n";
    for (const auto& [position, aggregate] : points)
      svg << "<circle cx=\"" << fmt(x_of(position)) << "\" cy=\""
          << fmt(y_of(aggregate->mean)) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    svg << "<text x=\"" << fmt(left + 8) << "\" y=\"" << fmt(top + 14 * series + 10)
        << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << color << "\">"
        << xml_escape(name) << "</text>\n";
    ++series;
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string render_attention_svg(const AttentionProfile& profile, const SvgStyle& style) {
  if (profile.basket_mass.empty())
    throw Error("render_attention_svg: empty profile");

  // <s> bar, gap, content baskets, gap, </s> bar.
  struct Bar {
    std::string label;
    double mass;
    const char* fill;
  };
  std::vector<Bar> bars;
  bars.push_back({"<s>", profile.start_mass, "#7f7f7f"});
  for (std::size_t i = 0; i < profile.basket_mass.size(); ++i)
    bars.push_back({"b" + std::to_string(i + 2), profile.basket_mass[i], "#1f77b4"});
  bars.push_back({"</s>", profile.end_mass, "#7f7f7f"});

  double hi = 0.0;
  for (const auto& bar : bars) hi = std::max(hi, bar.mass);
  if (hi <= 0.0) hi = 1.0;

  const double width = style.width, height = style.height;
  const double left = 56, right = width - 16, top = 40, bottom = height - 40;
  const double gap = 14;  // extra space isolating the special-token bars
  const double slot = (right - left - 2 * gap) / bars.size();
  const auto y_of = [&](double value) {
    return bottom - (bottom - top) * value / (hi * 1.1);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << style.width
      << "\" height=\"" << style.height << "\" viewBox=\"0 0 " << style.width << " "
      << style.height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!style.title.empty())
    svg << "<text x=\"" << fmt(width / 2) << "\" y=\"20\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"14\">" << xml_escape(style.title)
        << "</text>\n";
  svg << "<text x=\"" << fmt(width / 2) << "\" y=\"" << fmt(height - 6)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
      << xml_escape(profile.layer_descriptor) << "</text>\n";
  svg << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(bottom) << "\" x2=\""
      << fmt(right) << "\" y2=\"" << fmt(bottom) << "\" stroke=\"black\"/>\n";

  for (std::size_t i = 0; i < bars.size(); ++i) {
    double x = left + slot * i;
    if (i >= 1) x += gap;                   // after <s>
    if (i + 1 == bars.size()) x += gap;     // before </s>
    const double bar_width = slot * 0.8;
    const double y = y_of(bars[i].mass);
    svg << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\""
        << fmt(bar_width) << "\" height=\"" << fmt(bottom - y) << "\" fill=\""
        << bars[i].fill << "\"/>\n";
    svg << "<text x=\"" << fmt(x + bar_width / 2) << "\" y=\"" << fmt(bottom + 14)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
        << xml_escape(bars[i].label) << "</text>\n";
    svg << "<text x=\"" << fmt(x + bar_width / 2) << "\" y=\"" << fmt(y - 4)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"9\">"
        << fmt(bars[i].mass) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string format_ols_table(std::span<const LabeledFit> fits,
                             std::vector<double> alphas) {
  if (fits.empty()) throw Error("format_ols_table: no fits");
  std::sort(alphas.begin(), alphas.end(), std::greater<>());

  const auto stars = [&](double p_value) {
    std::string marker;
    for (double alpha : alphas)
      if (p_value < alpha) marker += '*';
    return marker;
  };

  std::ostringstream table;
  table << std::left << std::setw(24) << "instance" << std::setw(16) << "kind"
        << std::setw(24) << "variant" << std::right << std::setw(4) << "p"
        << std::setw(12) << "beta" << std::setw(12) << "se" << std::setw(10) << "t"
        << std::setw(12) << "p_value" << std::setw(6) << "G" << std::setw(8) << "N"
        << "  sig" << '\n';
  table << std::string(24 + 16 + 24 + 4 + 12 + 12 + 10 + 12 + 6 + 8 + 5, '-') << '\n';
  table << std::fixed;
  for (const auto& labeled : fits) {
    const OlsFit& fit = labeled.fit;
    for (int p = 1; p <= fit.n_positions; ++p) {
      table << std::left << std::setw(24) << labeled.instance_id << std::setw(16)
            << to_string(fit.kind) << std::setw(24) << labeled.calibration_id
            << std::right << std::setw(4) << p << std::setprecision(4) << std::setw(12)
            << fit.coefficients(p - 1) << std::setw(12) << fit.standard_errors(p - 1)
            << std::setprecision(2) << std::setw(10) << fit.t_statistics(p - 1)
            << std::setprecision(4) << std::setw(12) << fit.p_values(p - 1)
            << std::setw(6) << fit.cluster_count << std::setw(8) << fit.observation_count
            << "  " << (p == 1 ? "" : stars(fit.p_values(p - 1))) << '\n';
    }
  }
  table << "markers:";
  for (std::size_t i = 0; i < alphas.size(); ++i)
    table << (i ? "," : "") << ' ' << std::string(i + 1, '*') << " p<" << alphas[i];
  table << '\n';
  return table.str();
}

}  // namespace embaudit
