#pragma once

// Minimal SVG charts for evaluation reports.

#include <algorithm>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "vidtopic/eval.hpp"
#include "vidtopic/sweep.hpp"

namespace vidtopic::svg {

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

struct Frame {
  double w = 480, h = 360, left = 60, right = 20, top = 40, bottom = 50;
  double px(double x01) const { return left + x01 * (w - left - right); }
  double py(double y01) const { return h - bottom - y01 * (h - top - bottom); }
};

inline std::string open(const Frame& f, const std::string& title, const std::string& xlabel, const std::string& ylabel) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(f.w) + "\" height=\"" + num(f.h) +
                  "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(f.w / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) + "</text>\n";
  s += "<line x1=\"" + num(f.px(0)) + "\" y1=\"" + num(f.py(0)) + "\" x2=\"" + num(f.px(1)) + "\" y2=\"" + num(f.py(0)) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(f.px(0)) + "\" y1=\"" + num(f.py(0)) + "\" x2=\"" + num(f.px(0)) + "\" y2=\"" + num(f.py(1)) +
       "\" stroke=\"black\"/>\n";
  s += "<text x=\"" + num(f.px(0.5)) + "\" y=\"" + num(f.h - 12) + "\" text-anchor=\"middle\">" + escape(xlabel) + "</text>\n";
  s += "<text x=\"16\" y=\"" + num(f.py(0.5)) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " + num(f.py(0.5)) +
       ")\">" + escape(ylabel) + "</text>\n";
  return s;
}

}  // namespace detail

inline std::string roc_chart(const RocCurve& c, const std::string& title = "ROC") {
  using detail::num;
  detail::Frame f;
  std::string s = detail::open(f, title + " (AUROC " + num(c.auroc) + ")", "false positive rate", "true positive rate");
  s += "<line x1=\"" + num(f.px(0)) + "\" y1=\"" + num(f.py(0)) + "\" x2=\"" + num(f.px(1)) + "\" y2=\"" + num(f.py(1)) +
       "\" stroke=\"#bbb\" stroke-dasharray=\"4 4\"/>\n";
  std::string pts = num(f.px(0)) + "," + num(f.py(0));
  for (const auto& p : c.points) pts += " " + num(f.px(p.fp_rate)) + "," + num(f.py(p.tp_rate));
  pts += " " + num(f.px(1)) + "," + num(f.py(1));
  s += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    s += "<text x=\"" + num(f.px(v)) + "\" y=\"" + num(f.py(0) + 16) + "\" text-anchor=\"middle\">" + num(v) + "</text>\n";
    s += "<text x=\"" + num(f.px(0) - 6) + "\" y=\"" + num(f.py(v) + 4) + "\" text-anchor=\"end\">" + num(v) + "</text>\n";
  }
  return s + "</svg>\n";
}

// Grouped bars: one group per label, one bar per series.
inline std::string bar_chart(const std::vector<std::string>& labels,
                             const std::vector<std::pair<std::string, std::vector<double>>>& series,
                             const std::string& title, const std::string& xlabel, const std::string& ylabel) {
  using detail::num;
  detail::Frame f;
  std::string s = detail::open(f, title, xlabel, ylabel);
  double top = 1.0;
  for (const auto& [name, values] : series)
    for (double v : values) top = std::max(top, v);
  const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  const double group = 1.0 / std::max<std::size_t>(1, labels.size());
  const double bar = group * 0.8 / std::max<std::size_t>(1, series.size());
  for (std::size_t g = 0; g < labels.size(); ++g) {
    for (std::size_t k = 0; k < series.size(); ++k) {
      const double v = g < series[k].second.size() ? series[k].second[g] : 0.0;
      const double x0 = g * group + group * 0.1 + k * bar;
      s += "<rect x=\"" + num(f.px(x0)) + "\" y=\"" + num(f.py(v / top)) + "\" width=\"" + num(f.px(x0 + bar) - f.px(x0)) +
           "\" height=\"" + num(f.py(0) - f.py(v / top)) + "\" fill=\"" + colours[k % 4] + "\"/>\n";
    }
    s += "<text x=\"" + num(f.px(g * group + group / 2)) + "\" y=\"" + num(f.py(0) + 16) + "\" text-anchor=\"middle\">" +
         detail::escape(labels[g]) + "</text>\n";
  }
  for (std::size_t k = 0; k < series.size(); ++k)
    s += "<text x=\"" + num(f.px(0.02)) + "\" y=\"" + num(f.py(1) + 14 * k) + "\" fill=\"" + colours[k % 4] + "\">" +
         detail::escape(series[k].first) + "</text>\n";
  s += "<text x=\"" + num(f.px(0) - 6) + "\" y=\"" + num(f.py(1) + 4) + "\" text-anchor=\"end\">" + num(top) + "</text>\n";
  return s + "</svg>\n";
}

inline std::string sweep_chart(const std::vector<SweepPoint>& points) {
  std::vector<std::string> labels;
  std::vector<double> tp, fp;
  for (const auto& p : points) {
    labels.push_back("F=" + std::to_string(p.frames_per_clip));
    tp.push_back(p.experiment.report.true_positives);
    fp.push_back(p.experiment.report.false_positives);
  }
  return bar_chart(labels, {{"true positives", tp}, {"false positives", fp}}, "Clip-length sweep", "clip length",
                   "count");
}

}  // namespace vidtopic::svg
