#pragma once

// Scoring retrieval output against ground truth: one-to-one detection
// matching, ROC curves over a score-threshold grid, and model statistics.

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vidtopic/error.hpp"
#include "vidtopic/formats.hpp"
#include "vidtopic/lda.hpp"
#include "vidtopic/refinery.hpp"
#include "vidtopic/retrieval.hpp"
#include "vidtopic/scene.hpp"

namespace vidtopic {

inline constexpr double kDefaultIou = 0.3;

inline double temporal_iou(const FrameInterval& a, const FrameInterval& b) {
  const auto inter = overlap_length(a, b);
  const auto uni = (a.end - a.begin) + (b.end - b.begin) - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

struct DetectionReport {
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (result index, event index)

  double precision() const {
    const int n = true_positives + false_positives;
    return n > 0 ? static_cast<double>(true_positives) / n : 1.0;
  }
  double recall() const {
    const int n = true_positives + false_negatives;
    return n > 0 ? static_cast<double>(true_positives) / n : 1.0;
  }
};

// Results are visited by descending score (then by time, so the outcome does
// not depend on input order); each takes the unmatched event with the
// highest IoU, if that reaches the threshold.
inline DetectionReport match_detections(std::span<const SearchResult> results,
                                        std::span<const GroundTruthEvent> events, double iou_threshold = kDefaultIou) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw ConfigError("iou_threshold must lie in (0,1]");
  std::vector<std::size_t> order(results.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = results[a];
    const auto& rb = results[b];
    if (ra.score != rb.score) return ra.score > rb.score;
    if (ra.start_frame != rb.start_frame) return ra.start_frame < rb.start_frame;
    if (ra.end_frame != rb.end_frame) return ra.end_frame < rb.end_frame;
    return a < b;
  });
  std::vector<std::size_t> event_order(events.size());
  std::iota(event_order.begin(), event_order.end(), std::size_t{0});
  std::stable_sort(event_order.begin(), event_order.end(), [&](std::size_t a, std::size_t b) {
    if (events[a].frames.begin != events[b].frames.begin) return events[a].frames.begin < events[b].frames.begin;
    return events[a].frames.end < events[b].frames.end;
  });
  std::vector<bool> taken(events.size(), false);
  DetectionReport rep;
  for (std::size_t ri : order) {
    const FrameInterval iv{results[ri].start_frame, results[ri].end_frame};
    double best = 0.0;
    std::optional<std::size_t> pick;
    for (std::size_t ei : event_order) {
      if (taken[ei]) continue;
      const double iou = temporal_iou(iv, events[ei].frames);
      if (iou >= iou_threshold && iou > best) {
        best = iou;
        pick = ei;
      }
    }
    if (pick) {
      taken[*pick] = true;
      rep.matches.push_back({ri, *pick});
      ++rep.true_positives;
    } else {
      ++rep.false_positives;
    }
  }
  rep.false_negatives = static_cast<int>(events.size()) - rep.true_positives;
  std::sort(rep.matches.begin(), rep.matches.end());
  return rep;
}

inline Json to_json(const DetectionReport& r) {
  Json m = Json::array();
  for (const auto& [a, b] : r.matches) m.push_back({a, b});
  return Json{{"true_positives", r.true_positives},
              {"false_positives", r.false_positives},
              {"false_negatives", r.false_negatives},
              {"precision", r.precision()},
              {"recall", r.recall()},
              {"matches", m}};
}

// ---- ROC -------------------------------------------------------------------

struct RocPoint {
  double threshold = 0.0;
  int true_positives = 0;
  int false_positives = 0;
  double tp_rate = 0.0;
  double fp_rate = 0.0;  // false positives over those at the most permissive threshold
};

struct RocCurve {
  std::vector<RocPoint> points;  // by falling threshold
  double auroc = 0.0;
};

// The curve runs from (0,0) through one point per threshold to (1,1); the
// area is taken with the trapezoid rule.
inline RocCurve roc_auroc(std::span<const SearchResult> results, std::span<const GroundTruthEvent> events,
                          std::vector<double> thresholds, double iou_threshold = kDefaultIou) {
  if (thresholds.size() < 2) throw ConfigError("ROC needs at least two thresholds");
  if (events.empty()) throw ConfigError("ROC is undefined without ground-truth events");
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  RocCurve curve;
  for (double thr : thresholds) {
    std::vector<SearchResult> kept;
    for (const auto& r : results)
      if (r.score >= thr) kept.push_back(r);
    const auto rep = match_detections(kept, events, iou_threshold);
    RocPoint p;
    p.threshold = thr;
    p.true_positives = rep.true_positives;
    p.false_positives = rep.false_positives;
    p.tp_rate = static_cast<double>(rep.true_positives) / static_cast<double>(events.size());
    curve.points.push_back(p);
  }
  const int max_fp = curve.points.back().false_positives;
  for (auto& p : curve.points)
    p.fp_rate = max_fp > 0 ? static_cast<double>(p.false_positives) / static_cast<double>(max_fp) : 0.0;
  double px = 0.0, py = 0.0, area = 0.0;
  auto step = [&](double x, double y) {
    area += (x - px) * (y + py) / 2.0;
    px = x;
    py = y;
  };
  for (const auto& p : curve.points) step(p.fp_rate, p.tp_rate);
  step(1.0, 1.0);
  curve.auroc = std::clamp(area, 0.0, 1.0);
  return curve;
}

// True when both rates are non-decreasing as the threshold falls.
inline bool roc_is_monotone(const RocCurve& c) {
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    if (c.points[i].true_positives < c.points[i - 1].true_positives) return false;
    if (c.points[i].false_positives < c.points[i - 1].false_positives) return false;
  }
  return true;
}

inline std::vector<double> threshold_grid(std::span<const SearchResult> results, std::size_t steps = 0) {
  std::vector<double> t;
  for (const auto& r : results) t.push_back(r.score);
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  if (steps > 1 && !t.empty()) {
    std::vector<double> g;
    for (std::size_t i = 0; i < steps; ++i)
      g.push_back(t.front() + (t.back() - t.front()) * static_cast<double>(i) / static_cast<double>(steps - 1));
    t = std::move(g);
  }
  if (t.empty()) t.push_back(0.0);
  t.push_back(t.back() + 1.0);  // nothing passes
  return t;
}

inline Json to_json(const RocCurve& c) {
  Json pts = Json::array();
  for (const auto& p : c.points)
    pts.push_back({{"threshold", p.threshold},
                   {"true_positives", p.true_positives},
                   {"false_positives", p.false_positives},
                   {"tp_rate", p.tp_rate},
                   {"fp_rate", p.fp_rate}});
  return Json{{"points", pts}, {"auroc", c.auroc}};
}

// ---- model statistics ------------------------------------------------------

struct ModelStats {
  int topics = 0;
  double mean_words_per_topic = 0.0;  // words within the support threshold of the topic's peak word
  double mean_pairwise_overlap = 0.0;
};

inline ModelStats single_model_stats(const TopicModel& m, double support_threshold) {
  ModelStats st;
  st.topics = m.num_topics();
  if (m.topics.empty()) return st;
  std::vector<std::vector<Cell>> supports;
  double words = 0.0;
  for (const auto& t : m.topics) {
    words += words_above(t, support_threshold);
    supports.push_back(topic_support(t, support_threshold, m.grid_w, m.grid_h));
  }
  st.mean_words_per_topic = words / static_cast<double>(m.topics.size());
  double overlap = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < supports.size(); ++i)
    for (std::size_t j = i + 1; j < supports.size(); ++j) {
      overlap += overlap_score(supports[i], supports[j]);
      ++pairs;
    }
  st.mean_pairwise_overlap = pairs > 0 ? overlap / static_cast<double>(pairs) : 0.0;
  return st;
}

struct ModelComparison {
  ModelStats primary;
  ModelStats secondary;
};

inline ModelComparison model_stats(const TopicModel& primary, const TopicModel& secondary,
                                   double support_threshold = 0.1) {
  if (primary.space != secondary.space) throw ConfigError("model_stats needs two models of one feature space");
  return {single_model_stats(primary, support_threshold), single_model_stats(secondary, support_threshold)};
}

inline Json to_json(const ModelStats& s) {
  return Json{{"topics", s.topics},
              {"mean_words_per_topic", s.mean_words_per_topic},
              {"mean_pairwise_overlap", s.mean_pairwise_overlap}};
}

inline Json to_json(const ModelComparison& c) {
  return Json{{"primary", to_json(c.primary)}, {"secondary", to_json(c.secondary)}};
}

}  // namespace vidtopic
