#pragma once

// Figure and table rendering from upstream results: accumulation curves with
// CI bands, velocity curves, forest plots on a log scale with the HR = 1
// reference line, and the covariate summary tables. Every numeric printed in
// a table is carried through from the upstream values; nothing is refitted
// here. Rendering is deterministic.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "factsurv/cox.hpp"
#include "factsurv/error.hpp"
#include "factsurv/survival.hpp"
#include "factsurv/svg.hpp"
#include "factsurv/velocity.hpp"

namespace factsurv {

inline const std::vector<std::string>& report_palette() {
  static const std::vector<std::string> colors = {
      "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
  return colors;
}

// Full-precision, locale-free decimal text for a double (shortest
// round-trip form, as used in the JSON outputs).
inline std::string number_text(double v) {
  return nlohmann::json(v).dump();
}

struct CurveStyle {
  double width = 640.0;
  double height = 420.0;
  std::string title;
  std::string y_label = "F(t)";
  std::string x_label = "epoch";
  int max_epoch = 20;
  double y_max = 1.0;
};

namespace detail {

struct PlotFrame {
  double x0, y0, x1, y1; // plot area in svg coordinates (y0 = top)
  double x_max, y_max;

  double x(double v) const { return x0 + (x1 - x0) * (v / x_max); }
  double y(double v) const { return y1 - (y1 - y0) * (v / y_max); }
};

inline PlotFrame draw_frame(svg::Document& doc, const CurveStyle& style) {
  PlotFrame fr{64.0, 40.0, style.width - 20.0, style.height - 44.0,
               static_cast<double>(style.max_epoch), style.y_max};
  doc.text(style.width / 2.0, 22.0, style.title, 14.0, "middle");
  // axes
  doc.line(fr.x0, fr.y1, fr.x1, fr.y1, "#222222");
  doc.line(fr.x0, fr.y0, fr.x0, fr.y1, "#222222");
  // x ticks at integer epochs that fit, every ceil(E/10)
  int step = std::max(1, (style.max_epoch + 9) / 10);
  for (int e = 0; e <= style.max_epoch; e += step) {
    double px = fr.x(e);
    doc.line(px, fr.y1, px, fr.y1 + 4.0, "#222222");
    doc.text(px, fr.y1 + 16.0, std::to_string(e), 10.0, "middle");
  }
  doc.text((fr.x0 + fr.x1) / 2.0, style.height - 8.0, style.x_label, 11.0, "middle");
  // y ticks at 5 divisions
  for (int i = 0; i <= 5; ++i) {
    double v = style.y_max * i / 5.0;
    double py = fr.y(v);
    doc.line(fr.x0 - 4.0, py, fr.x0, py, "#222222");
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    doc.text(fr.x0 - 8.0, py + 3.5, buf, 10.0, "end");
  }
  doc.text(14.0, (fr.y0 + fr.y1) / 2.0, style.y_label, 11.0, "middle");
  return fr;
}

// Right-continuous step corners of F with its CI band on the epoch grid.
struct StepSeries {
  std::vector<std::pair<double, double>> line;
  std::vector<std::pair<double, double>> band; // lower forward, upper backward
};

inline StepSeries accumulation_steps(const SurvivalCurve& curve, const PlotFrame& fr,
                                     int max_epoch) {
  StepSeries out;
  std::vector<std::pair<double, double>> upper_rev;
  double f = 0.0, lo = 0.0, hi = 0.0;
  std::size_t j = 0;
  for (int e = 0; e <= max_epoch; ++e) {
    bool changed = false;
    while (j < curve.size() && curve.times[j] <= e) {
      f = curve.accumulation[j];
      lo = 1.0 - curve.ci_upper[j];
      hi = 1.0 - curve.ci_lower[j];
      ++j;
      changed = true;
    }
    (void)changed;
    out.line.emplace_back(fr.x(e), fr.y(f));
    if (e < max_epoch) out.line.emplace_back(fr.x(e + 1), fr.y(f));
    out.band.emplace_back(fr.x(e), fr.y(lo));
    if (e < max_epoch) out.band.emplace_back(fr.x(e + 1), fr.y(lo));
    upper_rev.emplace_back(fr.x(e), fr.y(hi));
    if (e < max_epoch) upper_rev.emplace_back(fr.x(e + 1), fr.y(hi));
  }
  out.band.insert(out.band.end(), upper_rev.rbegin(), upper_rev.rend());
  return out;
}

} // namespace detail

// Accumulation curves F(t) with 95% CI bands, one color per stratum.
inline std::string render_accumulation(const std::map<std::string, SurvivalCurve>& strata,
                                       const CurveStyle& style, const std::string& source_hash) {
  if (strata.empty()) throw ValidationError("render_accumulation: no curves");
  svg::Document doc(style.width, style.height, source_hash);
  auto fr = detail::draw_frame(doc, style);
  std::size_t color = 0;
  double legend_y = fr.y0 + 8.0;
  for (const auto& [name, curve] : strata) {
    const std::string& c = report_palette()[color % report_palette().size()];
    auto steps = detail::accumulation_steps(curve, fr, style.max_epoch);
    doc.polygon(steps.band, c, 0.18);
    doc.polyline(steps.line, c);
    doc.line(fr.x0 + 10.0, legend_y, fr.x0 + 30.0, legend_y, c, 2.0);
    doc.text(fr.x0 + 36.0, legend_y + 3.5, name, 11.0);
    legend_y += 16.0;
    ++color;
  }
  return doc.finish();
}

// Velocity curves V(t), one color per stratum.
inline std::string render_velocity(const std::map<std::string, VelocityCurve>& strata,
                                   CurveStyle style, const std::string& source_hash) {
  if (strata.empty()) throw ValidationError("render_velocity: no curves");
  double vmax = 0.0;
  for (const auto& [name, vc] : strata) {
    for (double v : vc.v) vmax = std::max(vmax, v);
  }
  style.y_max = vmax > 0.0 ? vmax * 1.15 : 1.0;
  style.y_label = "V(t)";
  svg::Document doc(style.width, style.height, source_hash);
  auto fr = detail::draw_frame(doc, style);
  std::size_t color = 0;
  double legend_y = fr.y0 + 8.0;
  for (const auto& [name, vc] : strata) {
    const std::string& c = report_palette()[color % report_palette().size()];
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < vc.v.size(); ++i) {
      pts.emplace_back(fr.x(static_cast<double>(vc.epochs[i])), fr.y(std::max(0.0, vc.v[i])));
    }
    doc.polyline(pts, c);
    doc.line(fr.x0 + 10.0, legend_y, fr.x0 + 30.0, legend_y, c, 2.0);
    doc.text(fr.x0 + 36.0, legend_y + 3.5, name, 11.0);
    legend_y += 16.0;
    ++color;
  }
  return doc.finish();
}

struct ForestRow {
  std::string name;
  double hr = 1.0;
  double ci_low = 1.0;
  double ci_high = 1.0;
  double p = 1.0;
};

inline std::vector<ForestRow> forest_rows(const CoxFit& fit) {
  std::vector<ForestRow> rows;
  for (std::size_t j = 0; j < fit.names.size(); ++j) {
    rows.push_back({fit.names[j], fit.hazard_ratio[j], fit.ci_low[j], fit.ci_high[j],
                    fit.wald_p[j]});
  }
  return rows;
}

// Forest plot: one row per covariate, point at HR with CI whiskers on a
// logarithmic axis, vertical reference at HR = 1. Rows keep input order.
inline std::string render_forest(const std::vector<ForestRow>& rows, const std::string& title,
                                 const std::string& source_hash) {
  if (rows.empty()) throw ValidationError("render_forest: no covariates");
  for (const auto& r : rows) {
    if (!(r.hr > 0.0) || !(r.ci_low > 0.0) || !(r.ci_high > 0.0)) {
      throw ValidationError("render_forest: nonpositive hazard ratio or interval for '" +
                            r.name + "'");
    }
  }
  double lmin = 0.0, lmax = 0.0;
  for (const auto& r : rows) {
    lmin = std::min(lmin, std::log(r.ci_low));
    lmax = std::max(lmax, std::log(r.ci_high));
  }
  lmin -= 0.25;
  lmax += 0.25;

  const double width = 640.0;
  const double row_h = 28.0;
  const double top = 56.0;
  const double height = top + row_h * rows.size() + 48.0;
  const double x0 = 170.0, x1 = width - 30.0;
  auto x_of = [&](double hr) {
    return x0 + (x1 - x0) * (std::log(hr) - lmin) / (lmax - lmin);
  };

  svg::Document doc(width, height, source_hash);
  doc.text(width / 2.0, 24.0, title, 14.0, "middle");
  double axis_y = top + row_h * rows.size() + 8.0;
  doc.line(x0, axis_y, x1, axis_y, "#222222");
  for (double tick : {0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
    double lt = std::log(tick);
    if (lt < lmin || lt > lmax) continue;
    doc.line(x_of(tick), axis_y, x_of(tick), axis_y + 4.0, "#222222");
    doc.text(x_of(tick), axis_y + 16.0, number_text(tick), 10.0, "middle");
  }
  doc.text((x0 + x1) / 2.0, height - 8.0, "hazard ratio (log scale)", 11.0, "middle");
  doc.line(x_of(1.0), top - 12.0, x_of(1.0), axis_y, "#888888", 1.0, "4,3");

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    double cy = top + row_h * i + row_h / 2.0;
    doc.text(12.0, cy + 3.5, r.name, 11.0);
    doc.line(x_of(r.ci_low), cy, x_of(r.ci_high), cy,
             report_palette()[0], 1.5);
    doc.line(x_of(r.ci_low), cy - 4.0, x_of(r.ci_low), cy + 4.0, report_palette()[0], 1.5);
    doc.line(x_of(r.ci_high), cy - 4.0, x_of(r.ci_high), cy + 4.0, report_palette()[0], 1.5);
    doc.circle(x_of(r.hr), cy, 3.5, report_palette()[0]);
  }
  return doc.finish();
}

// CSV table mirroring the paper's columns, with a strict p < threshold
// significance flag.
inline std::string render_table_csv(const std::vector<ForestRow>& rows,
                                    double significance = 0.01) {
  std::string out = "covariate,hr,ci_low,ci_high,p,significant\n";
  for (const auto& r : rows) {
    out += r.name + "," + number_text(r.hr) + "," + number_text(r.ci_low) + "," +
           number_text(r.ci_high) + "," + number_text(r.p) + "," +
           (r.p < significance ? "1" : "0") + "\n";
  }
  return out;
}

inline nlohmann::ordered_json render_table_json(const std::vector<ForestRow>& rows,
                                                double significance = 0.01) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json row;
    row["covariate"] = r.name;
    row["hr"] = r.hr;
    row["ci_low"] = r.ci_low;
    row["ci_high"] = r.ci_high;
    row["p"] = r.p;
    row["significant"] = r.p < significance;
    out.push_back(row);
  }
  return out;
}

} // namespace factsurv
