#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dawood/config.hpp"
#include "dawood/train.hpp"

namespace dawood {

struct Series {
  std::string label;
  std::vector<double> y;  // one value per level
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline constexpr const char* kSeriesColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                                "#bcbd22", "#17becf"};

}  // namespace detail

// One panel of a line plot, drawn at (ox, oy) with the given size.
inline void svg_panel(std::ostringstream& os, double ox, double oy, double w, double h,
                      const std::string& title, const std::vector<Series>& series) {
  using detail::num;
  const double left = 48, right = 12, top = 24, bottom = 32;
  const double pw = w - left - right, ph = h - top - bottom;
  std::size_t levels = 0;
  double lo = 0, hi = 0;
  bool first = true;
  for (const auto& s : series) {
    levels = std::max(levels, s.y.size());
    for (double v : s.y) {
      if (!std::isfinite(v)) continue;
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
    }
  }
  lo = std::min(lo, 0.0);
  if (hi <= lo) hi = lo + 1;
  const auto sx = [&](std::size_t i) {
    return ox + left + (levels > 1 ? pw * static_cast<double>(i) / static_cast<double>(levels - 1) : 0);
  };
  const auto sy = [&](double v) { return oy + top + ph * (1 - (v - lo) / (hi - lo)); };

  os << "<g>\n<text x=\"" << num(ox + w / 2) << "\" y=\"" << num(oy + 16)
     << "\" text-anchor=\"middle\" font-size=\"13\">" << detail::xml_escape(title) << "</text>\n";
  os << "<rect x=\"" << num(ox + left) << "\" y=\"" << num(oy + top) << "\" width=\"" << num(pw)
     << "\" height=\"" << num(ph) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    os << "<text x=\"" << num(ox + left - 4) << "\" y=\"" << num(sy(v) + 4)
       << "\" text-anchor=\"end\" font-size=\"10\">" << num(v) << "</text>\n";
  }
  for (std::size_t i = 0; i < levels; ++i)
    os << "<text x=\"" << num(sx(i)) << "\" y=\"" << num(oy + top + ph + 14)
       << "\" text-anchor=\"middle\" font-size=\"10\">" << i + 1 << "</text>\n";
  os << "<text x=\"" << num(ox + left + pw / 2) << "\" y=\"" << num(oy + h - 4)
     << "\" text-anchor=\"middle\" font-size=\"11\">tree level</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = detail::kSeriesColors[s % std::size(detail::kSeriesColors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].y.size(); ++i)
      os << (i ? " " : "") << num(sx(i)) << ',' << num(sy(series[s].y[i]));
    os << "\"/>\n";
    os << "<text x=\"" << num(ox + left + 6) << "\" y=\"" << num(oy + top + 14 + 13.0 * s)
       << "\" font-size=\"10\" fill=\"" << color << "\">" << detail::xml_escape(series[s].label)
       << "</text>\n";
  }
  os << "</g>\n";
}

// Entropy, chi2 and KL against tree level, one line per alpha (averaged
// over trees), side by side.
inline std::string diagnostics_svg(const std::vector<LevelDiagnostics>& rows) {
  // alpha -> level -> (sum, count) per measure
  struct Acc {
    double e = 0, c = 0, k = 0;
    int n = 0;
  };
  std::map<double, std::map<int, Acc>> by_alpha;
  for (const auto& r : rows) {
    auto& a = by_alpha[r.alpha][r.level];
    a.e += r.entropy;
    a.c += r.chi2;
    a.k += r.kl;
    ++a.n;
  }
  std::vector<Series> entropy_s, chi2_s, kl_s;
  for (const auto& [alpha, levels] : by_alpha) {
    const std::string label = "alpha=" + format_double(alpha);
    Series e{label, {}}, c{label, {}}, k{label, {}};
    for (const auto& [level, a] : levels) {
      e.y.push_back(a.e / a.n);
      c.y.push_back(a.c / a.n);
      k.y.push_back(a.k / a.n);
    }
    entropy_s.push_back(std::move(e));
    chi2_s.push_back(std::move(c));
    kl_s.push_back(std::move(k));
  }
  const double w = 320, h = 240;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 3 * w << "\" height=\"" << h
     << "\" font-family=\"sans-serif\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg_panel(os, 0, 0, w, h, "label entropy", entropy_s);
  svg_panel(os, w, 0, w, h, "chi2 distance", chi2_s);
  svg_panel(os, 2 * w, 0, w, h, "KL divergence", kl_s);
  os << "</svg>\n";
  return os.str();
}

}  // namespace dawood
