#pragma once

// Sketch-driven retrieval experiments on scripted scenes, and the
// clip-length sweep built on them.

#include <optional>
#include <string>
#include <vector>

#include "vidtopic/engine.hpp"
#include "vidtopic/eval.hpp"
#include "vidtopic/pipeline.hpp"
#include "vidtopic/query.hpp"
#include "vidtopic/scenarios.hpp"

namespace vidtopic {

// Top-ranked topic for every stroke; nullopt if some stroke matches nothing.
inline std::optional<std::vector<TopicRef>> resolve_strokes(const Catalog& c, const std::vector<SketchStroke>& strokes) {
  const auto ms = c.model_set();
  if (!ms[space_index(FeatureSpace::Motion)]) return std::nullopt;
  SketchQuery q;
  q.strokes = strokes;
  const auto res = sketch_to_topics(q, ms, 1, c.support_threshold);
  std::vector<TopicRef> out;
  for (const auto& r : res.strokes) {
    if (r.empty()) return std::nullopt;
    out.push_back(r.front().topic);
  }
  return out;
}

struct SequenceExperiment {
  std::vector<TopicRef> topics;  // empty if the sketch did not resolve
  std::string query;             // DSL text that was executed
  std::vector<SearchResult> results;
  DetectionReport report;
};

inline SequenceExperiment run_sequence_experiment(const Catalog& c, const GroundTruthLog& truth,
                                                  const std::vector<SketchStroke>& strokes, const std::string& label,
                                                  const AlignmentParams& params = {}, double iou = kDefaultIou) {
  SequenceExperiment x;
  const auto events = truth.select(EventKind::MotionTraverse, label);
  if (auto topics = resolve_strokes(c, strokes)) {
    x.topics = *topics;
    QuerySpec q;
    q.spaces = {FeatureSpace::Motion};
    q.section = {c.scene_id, std::nullopt};
    q.strategy = SequenceQuery{x.topics, params};
    x.query = unparse(q);
    x.results = execute(c, parse_query(x.query)).results;
  }
  x.report = match_detections(x.results, events, iou);
  return x;
}

struct SweepPoint {
  int frames_per_clip = 0;
  SequenceExperiment experiment;
};

// Runs the full pipeline once per clip length on the same scene and seed,
// resolving the same sketch against each resulting model.
inline std::vector<SweepPoint> clip_length_sweep(const PipelineConfig& base, const Scenario& scenario,
                                                 const std::vector<int>& clip_lengths,
                                                 const std::vector<SketchStroke>& strokes, const std::string& label,
                                                 double iou = kDefaultIou) {
  std::vector<SweepPoint> out;
  for (int f : clip_lengths) {
    PipelineConfig cfg = base;
    cfg.scene.frames_per_clip = f;
    cfg.section_frames = 0;
    const auto run = build_pipeline(cfg, scenario);
    SweepPoint p;
    p.frames_per_clip = f;
    p.experiment = run_sequence_experiment(make_catalog(run), run.ground_truth, strokes, label, {}, iou);
    out.push_back(std::move(p));
  }
  return out;
}

inline std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::string out = "frames_per_clip,results,true_positives,false_positives,false_negatives\n";
  for (const auto& p : points) {
    const auto& r = p.experiment.report;
    out += std::to_string(p.frames_per_clip) + "," + std::to_string(p.experiment.results.size()) + "," +
           std::to_string(r.true_positives) + "," + std::to_string(r.false_positives) + "," +
           std::to_string(r.false_negatives) + "\n";
  }
  return out;
}

}  // namespace vidtopic
