#pragma once

// Turns a trained (primary) model into a model of primitive topics: each
// topic is one connected blob of cells and, for motion, one direction.
// Near-duplicate primitives are then removed by overlap score.

#include <algorithm>
#include <array>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "vidtopic/error.hpp"
#include "vidtopic/ingest.hpp"
#include "vidtopic/lda.hpp"

namespace vidtopic {

struct RefineryParams {
  double support_threshold = 0.1;    // relative to the heaviest cell of a topic
  double direction_threshold = 0.1;  // relative to the heaviest direction within a cell
  double overlap_threshold = 0.8;
  int connectivity = 4;
  friend bool operator==(const RefineryParams&, const RefineryParams&) = default;
};

inline void validate_refinery_params(const RefineryParams& p) {
  if (!(p.support_threshold > 0.0 && p.support_threshold < 1.0)) throw ConfigError("support_threshold must lie in (0,1)");
  if (!(p.direction_threshold > 0.0 && p.direction_threshold < 1.0))
    throw ConfigError("direction_threshold must lie in (0,1)");
  if (!(p.overlap_threshold > 0.0 && p.overlap_threshold <= 1.0)) throw ConfigError("overlap_threshold must lie in (0,1]");
  if (p.connectivity != 4 && p.connectivity != 8) throw ConfigError("connectivity must be 4 or 8");
}

// Cell support of a topic, optionally tagged with its single direction.
struct TopicBlob {
  std::vector<Cell> cells;  // sorted, unique
  int source_topic = 0;
  std::optional<Direction> direction;
  friend bool operator==(const TopicBlob&, const TopicBlob&) = default;
};

// |a ∩ b| / |a ∪ b| over sorted unique cell lists; 0 when both are empty.
inline double overlap_score(std::span<const Cell> a, std::span<const Cell> b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t i = 0, j = 0, inter = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++inter;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline double overlap_score(const TopicBlob& a, const TopicBlob& b) { return overlap_score(a.cells, b.cells); }

// Summed word probability per cell (row-major, grid_w * grid_h entries).
inline std::vector<double> cell_masses(const Topic& t, int grid_w, int grid_h) {
  std::vector<double> mass(static_cast<std::size_t>(grid_w) * static_cast<std::size_t>(grid_h), 0.0);
  for (const auto& w : t.words) {
    const int cell = decode_word(t.space, w.word).cell_index;
    if (cell >= 0 && static_cast<std::size_t>(cell) < mass.size()) mass[static_cast<std::size_t>(cell)] += w.prob;
  }
  return mass;
}

inline std::vector<Cell> topic_support(const Topic& t, double support_threshold, int grid_w, int grid_h) {
  if (!(support_threshold > 0.0 && support_threshold < 1.0)) throw ConfigError("support_threshold must lie in (0,1)");
  const auto mass = cell_masses(t, grid_w, grid_h);
  const double peak = mass.empty() ? 0.0 : *std::max_element(mass.begin(), mass.end());
  std::vector<Cell> cells;
  if (peak <= 0.0) return cells;
  for (std::size_t i = 0; i < mass.size(); ++i)
    if (mass[i] > 0.0 && mass[i] >= support_threshold * peak)
      cells.push_back(Cell{static_cast<int>(i) % grid_w, static_cast<int>(i) / grid_w});
  return cells;
}

inline TopicBlob topic_blob(const Topic& t, double support_threshold, int grid_w, int grid_h) {
  return TopicBlob{topic_support(t, support_threshold, grid_w, grid_h), t.id, t.direction};
}

// Words whose probability reaches `threshold` times the topic's largest word
// probability.
inline int words_above(const Topic& t, double threshold) {
  double peak = 0.0;
  for (const auto& w : t.words) peak = std::max(peak, w.prob);
  if (peak <= 0.0) return 0;
  int n = 0;
  for (const auto& w : t.words)
    if (w.prob >= threshold * peak) ++n;
  return n;
}

// The single direction shared by all words of a motion topic, if any.
inline std::optional<Direction> common_direction(const Topic& t) {
  if (t.space != FeatureSpace::Motion || t.words.empty()) return std::nullopt;
  const int d0 = decode_word(t.space, t.words.front().word).value;
  for (const auto& w : t.words)
    if (decode_word(t.space, w.word).value != d0) return std::nullopt;
  return static_cast<Direction>(d0);
}

namespace detail {

inline Topic make_child(const Topic& parent, std::vector<WordProb> words, double parent_total) {
  Topic c;
  c.space = parent.space;
  double raw = 0.0;
  for (const auto& w : words) raw += w.prob;
  for (auto& w : words) w.prob /= raw;
  c.words = std::move(words);
  c.mass_hint = parent_total > 0.0 ? parent.mass_hint * raw / parent_total : 0.0;
  c.source_topic = parent.source_topic.value_or(parent.id);
  c.direction = common_direction(c);
  return c;
}

inline void renumber(std::vector<Topic>& topics) {
  for (std::size_t i = 0; i < topics.size(); ++i) topics[i].id = static_cast<int>(i);
}

// Partition a topic's words by the connected components of `cells`.
inline std::vector<Topic> split_by_components(const Topic& parent, const std::vector<WordProb>& words,
                                              std::span<const Cell> cells, int grid_w, int grid_h,
                                              int connectivity, double parent_total) {
  const auto blobs = connected_components(cells, grid_w, grid_h, connectivity);
  std::vector<int> blob_of(static_cast<std::size_t>(grid_w) * static_cast<std::size_t>(grid_h), -1);
  for (std::size_t b = 0; b < blobs.size(); ++b)
    for (const Cell& c : blobs[b]) blob_of[static_cast<std::size_t>(c.y * grid_w + c.x)] = static_cast<int>(b);
  std::vector<std::vector<WordProb>> parts(blobs.size());
  for (const auto& w : words) {
    const int b = blob_of[static_cast<std::size_t>(decode_word(parent.space, w.word).cell_index)];
    if (b >= 0) parts[static_cast<std::size_t>(b)].push_back(w);
  }
  std::vector<Topic> out;
  for (auto& p : parts)
    if (!p.empty()) out.push_back(make_child(parent, std::move(p), parent_total));
  return out;
}

inline void require_grid(const TopicModel& m) {
  if (m.grid_w < 1 || m.grid_h < 1) throw ConfigError("model carries no grid dimensions");
}

}  // namespace detail

// One topic per connected component of each topic's support, restricted to
// the component's cells and renormalized. Topics with empty support are
// dropped and listed in dropped_topics.
inline TopicModel decompose_topic_blobs(const TopicModel& model, double support_threshold, int connectivity = 4) {
  detail::require_grid(model);
  if (model.stage != ModelStage::Primary) throw ConfigError("blob decomposition expects a primary model");
  TopicModel out = model;
  out.topics.clear();
  out.stage = ModelStage::Secondary;
  for (const auto& t : model.topics) {
    const auto support = topic_support(t, support_threshold, model.grid_w, model.grid_h);
    if (support.empty()) {
      out.dropped_topics.push_back(t.source_topic.value_or(t.id));
      continue;
    }
    auto children = detail::split_by_components(t, t.words, support, model.grid_w, model.grid_h, connectivity,
                                                t.total_prob());
    for (auto& c : children) out.topics.push_back(std::move(c));
  }
  detail::renumber(out.topics);
  return out;
}

// Split each motion topic by direction, then by blob, so every output has
// one direction, one blob and at most one word per cell. Within a cell a
// direction is kept when its probability reaches direction_threshold times
// the cell's strongest direction.
inline TopicModel decompose_topic_directions(const TopicModel& model, double direction_threshold = 0.1,
                                             int connectivity = 4) {
  detail::require_grid(model);
  if (model.space != FeatureSpace::Motion) throw ConfigError("direction decomposition applies to motion models only");
  if (!(direction_threshold > 0.0 && direction_threshold < 1.0))
    throw ConfigError("direction_threshold must lie in (0,1)");
  TopicModel out = model;
  out.topics.clear();
  out.stage = ModelStage::Secondary;
  for (const auto& t : model.topics) {
    std::map<int, double> cell_peak;
    for (const auto& w : t.words) {
      auto& p = cell_peak[decode_word(t.space, w.word).cell_index];
      p = std::max(p, w.prob);
    }
    std::array<std::vector<WordProb>, 8> by_dir;
    std::array<std::vector<Cell>, 8> cells_of_dir;
    for (const auto& w : t.words) {
      const auto vw = decode_word(t.space, w.word);
      if (w.prob <= 0.0 || w.prob < direction_threshold * cell_peak[vw.cell_index]) continue;
      by_dir[static_cast<std::size_t>(vw.value)].push_back(w);
      cells_of_dir[static_cast<std::size_t>(vw.value)].push_back(
          Cell{vw.cell_index % model.grid_w, vw.cell_index / model.grid_w});
    }
    const double total = t.total_prob();
    for (std::size_t d = 0; d < 8; ++d) {
      if (by_dir[d].empty()) continue;
      auto children = detail::split_by_components(t, by_dir[d], cells_of_dir[d], model.grid_w, model.grid_h,
                                                   connectivity, total);
      for (auto& c : children) out.topics.push_back(std::move(c));
    }
  }
  detail::renumber(out.topics);
  return out;
}

struct DedupResult {
  TopicModel model;
  std::vector<RemapEntry> remap;
};

// Greedy removal in descending mass order: a topic is dropped when its
// support overlaps a kept topic (of the same direction, for motion) at or
// above the threshold, and is remapped to the kept topic it overlaps most.
inline DedupResult dedup_topics(const TopicModel& model, double overlap_threshold, double support_threshold = 0.1) {
  detail::require_grid(model);
  const auto n = model.topics.size();
  std::vector<TopicBlob> blobs;
  blobs.reserve(n);
  for (const auto& t : model.topics) blobs.push_back(topic_blob(t, support_threshold, model.grid_w, model.grid_h));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return model.topics[a].mass_hint > model.topics[b].mass_hint;
  });
  std::vector<std::size_t> kept;
  std::vector<std::optional<std::size_t>> merged_into(n);
  for (std::size_t i : order) {
    double best = -1.0;
    std::optional<std::size_t> target;
    for (std::size_t k : kept) {
      if (model.space == FeatureSpace::Motion && model.topics[i].direction != model.topics[k].direction) continue;
      const double s = overlap_score(blobs[i], blobs[k]);
      if (s >= overlap_threshold && s > best) {
        best = s;
        target = k;
      }
    }
    if (target)
      merged_into[i] = target;
    else
      kept.push_back(i);
  }
  std::sort(kept.begin(), kept.end());
  std::vector<int> new_id(n, -1);
  DedupResult r;
  r.model = model;
  r.model.topics.clear();
  for (std::size_t j = 0; j < kept.size(); ++j) {
    new_id[kept[j]] = static_cast<int>(j);
    r.model.topics.push_back(model.topics[kept[j]]);
  }
  detail::renumber(r.model.topics);
  for (std::size_t i = 0; i < n; ++i) {
    const int to = merged_into[i] ? new_id[*merged_into[i]] : new_id[i];
    r.remap.push_back({model.topics[i].id, to});
  }
  r.model.remap = r.remap;
  return r;
}

// blob decomposition -> direction decomposition (motion) -> deduplication.
inline TopicModel build_secondary_model(const TopicModel& primary, const RefineryParams& params = {}) {
  validate_refinery_params(params);
  TopicModel m = decompose_topic_blobs(primary, params.support_threshold, params.connectivity);
  if (m.space == FeatureSpace::Motion) m = decompose_topic_directions(m, params.direction_threshold, params.connectivity);
  m = dedup_topics(m, params.overlap_threshold, params.support_threshold).model;
  m.stage = ModelStage::Secondary;
  return m;
}

}  // namespace vidtopic
