#pragma once

// The four search strategies over one database section: single topic,
// topic co-occurrence, topic sequence (Smith-Waterman local alignment) and
// similar clips (Hellinger distance).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vidtopic/error.hpp"
#include "vidtopic/formats.hpp"
#include "vidtopic/index.hpp"
#include "vidtopic/ingest.hpp"

namespace vidtopic {

struct TopicRef {
  FeatureSpace space = FeatureSpace::Motion;
  std::int32_t topic = 0;
  friend constexpr bool operator==(const TopicRef&, const TopicRef&) = default;
  friend constexpr auto operator<=>(const TopicRef&, const TopicRef&) = default;
};

inline std::string to_string(const TopicRef& r) { return std::string(1, space_prefix(r.space)) + ":t" + std::to_string(r.topic); }

enum class Strategy : std::uint8_t { SingleTopic, CoOccurrence, TopicSequence, SimilarClips };

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::SingleTopic: return "single-topic";
    case Strategy::CoOccurrence: return "co-occurrence";
    case Strategy::TopicSequence: return "topic-sequence";
    case Strategy::SimilarClips: return "similar-clips";
  }
  return "?";
}

// Score semantics: single topic = mean topic value over the run;
// co-occurrence = mean over the run of the smallest queried value;
// topic sequence = raw alignment score; similar clips = Hellinger distance
// (summed over window offsets, lower is better).
struct SearchResult {
  std::int64_t start_clip = 0;
  std::int64_t end_clip = 0;  // inclusive
  std::int64_t start_frame = 0;
  std::int64_t end_frame = 0;  // exclusive
  double score = 0.0;
  Strategy strategy = Strategy::SingleTopic;
  std::vector<std::vector<TopicRef>> matched;  // per clip of the interval
  friend bool operator==(const SearchResult&, const SearchResult&) = default;
};

inline constexpr double kDefaultActivation = 0.1;

struct AlignmentParams {
  double match_reward = 2.0;
  double mismatch_penalty = 1.0;
  double gap_penalty = 1.0;
  std::optional<double> score_threshold;  // defaults to match_reward * (length - 0.5)
  double activation_threshold = kDefaultActivation;
  bool soft_match = false;

  double resolved_threshold(std::size_t query_length) const {
    return score_threshold.value_or(match_reward * (static_cast<double>(query_length) - 0.5));
  }
  friend bool operator==(const AlignmentParams&, const AlignmentParams&) = default;
};

inline void validate_alignment_params(const AlignmentParams& p) {
  if (!(p.match_reward > 0.0) || !(p.mismatch_penalty > 0.0) || !(p.gap_penalty > 0.0))
    throw ConfigError("alignment rewards and penalties must be > 0");
  if (p.score_threshold && !(*p.score_threshold >= 0.0)) throw ConfigError("score_threshold must be >= 0");
  if (!(p.activation_threshold >= 0.0)) throw ConfigError("activation threshold must be >= 0");
}

inline void check_activation(double tau, const Database& db) {
  if (tau < db.header.store_threshold)
    throw ConfigError("activation threshold " + std::to_string(tau) + " is below the database store threshold " +
                      std::to_string(db.header.store_threshold));
}

inline std::vector<int> active_topics(const ClipIndexEntry& e, FeatureSpace s, double tau, double store_threshold = 0.0) {
  if (tau < store_threshold)
    throw ConfigError("activation threshold " + std::to_string(tau) + " is below the store threshold " +
                      std::to_string(store_threshold));
  std::vector<int> out;
  for (const auto& tv : e.in(s))
    if (tv.value >= tau) out.push_back(tv.topic);
  return out;
}

namespace detail {

inline void check_topic(const Database& db, const TopicRef& r) {
  const int k = db.num_topics(r.space);
  if (k == 0) throw ConfigError(std::string("section has no ") + to_string(r.space) + " model");
  if (r.topic < 0 || r.topic >= k)
    throw ConfigError("topic " + to_string(r) + " does not exist (" + std::to_string(k) + " topics)");
}

inline SearchResult make_result(const Database& db, std::size_t first, std::size_t last, double score, Strategy s,
                                std::vector<std::vector<TopicRef>> matched) {
  SearchResult r;
  r.start_clip = db.entries[first].clip_id;
  r.end_clip = db.entries[last].clip_id;
  r.start_frame = db.entries[first].frames.begin;
  r.end_frame = db.entries[last].frames.end;
  r.score = score;
  r.strategy = s;
  r.matched = std::move(matched);
  return r;
}

// Merge maximal runs of clips for which `value_of` returns a value.
template <class F>
std::vector<SearchResult> merge_runs(const Database& db, Strategy strategy, const std::vector<TopicRef>& refs,
                                     F&& value_of) {
  std::vector<SearchResult> out;
  std::size_t i = 0;
  const std::size_t n = db.entries.size();
  while (i < n) {
    auto v = value_of(db.entries[i]);
    if (!v) {
      ++i;
      continue;
    }
    std::size_t j = i;
    double sum = 0.0;
    while (j < n) {
      auto vj = value_of(db.entries[j]);
      if (!vj) break;
      sum += *vj;
      ++j;
    }
    std::vector<std::vector<TopicRef>> matched(j - i, refs);
    out.push_back(make_result(db, i, j - 1, sum / static_cast<double>(j - i), strategy, std::move(matched)));
    i = j;
  }
  return out;
}

}  // namespace detail

inline std::vector<SearchResult> search_single_topic(const Database& db, const TopicRef& topic,
                                                     double tau = kDefaultActivation) {
  check_activation(tau, db);
  detail::check_topic(db, topic);
  return detail::merge_runs(db, Strategy::SingleTopic, {topic}, [&](const ClipIndexEntry& e) -> std::optional<double> {
    const double v = e.value(topic.space, topic.topic);
    if (v >= tau && v > 0.0) return v;
    return std::nullopt;
  });
}

inline std::vector<SearchResult> search_cooccurrence(const Database& db, const std::vector<TopicRef>& topics,
                                                     double tau = kDefaultActivation) {
  if (topics.size() < 2) throw ConfigError("co-occurrence needs at least two topics");
  check_activation(tau, db);
  for (const auto& t : topics) detail::check_topic(db, t);
  return detail::merge_runs(db, Strategy::CoOccurrence, topics, [&](const ClipIndexEntry& e) -> std::optional<double> {
    double low = std::numeric_limits<double>::infinity();
    for (const auto& t : topics) {
      const double v = e.value(t.space, t.topic);
      if (!(v >= tau && v > 0.0)) return std::nullopt;
      low = std::min(low, v);
    }
    return low;
  });
}

// ---- Smith-Waterman --------------------------------------------------------

// Topic values present in one clip, across the spaces a query touches.
using ClipSlot = std::vector<std::pair<TopicRef, double>>;

inline ClipSlot clip_slot(const ClipIndexEntry& e, std::span<const FeatureSpace> spaces) {
  ClipSlot slot;
  for (auto s : spaces)
    for (const auto& tv : e.in(s)) slot.push_back({TopicRef{s, tv.topic}, tv.value});
  return slot;
}

inline double slot_value(const ClipSlot& slot, const TopicRef& r) {
  for (const auto& [ref, v] : slot)
    if (ref == r) return v;
  return 0.0;
}

struct Alignment {
  std::size_t first = 0;  // stream positions, inclusive
  std::size_t last = 0;
  double score = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (query index, stream index), ascending
  friend bool operator==(const Alignment&, const Alignment&) = default;
};

// Substitution score of aligning query element `r` with a clip. Hard match:
// +match if the topic is active, -mismatch otherwise. Soft match
// interpolates linearly in the topic value.
inline double substitution_score(const ClipSlot& slot, const TopicRef& r, const AlignmentParams& p) {
  const double v = slot_value(slot, r);
  if (p.soft_match) return (p.match_reward + p.mismatch_penalty) * std::clamp(v, 0.0, 1.0) - p.mismatch_penalty;
  return (v >= p.activation_threshold && v > 0.0) ? p.match_reward : -p.mismatch_penalty;
}

// Best local alignment avoiding masked stream positions; nullopt when the
// best score is not positive.
inline std::optional<Alignment> best_local_alignment(std::span<const TopicRef> query, std::span<const ClipSlot> stream,
                                                     const AlignmentParams& p, const std::vector<bool>& masked) {
  const std::size_t m = query.size();
  const std::size_t n = stream.size();
  if (m == 0 || n == 0) return std::nullopt;
  const std::size_t W = n + 1;
  std::vector<double> H((m + 1) * W, 0.0);
  std::vector<double> S(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) S[i * n + j] = substitution_score(stream[j], query[i], p);
  double best = 0.0;
  std::size_t bi = 0, bj = 0;
  for (std::size_t j = 1; j <= n; ++j) {
    if (masked[j - 1]) continue;  // column stays zero: no alignment passes through
    for (std::size_t i = 1; i <= m; ++i) {
      const double diag = H[(i - 1) * W + j - 1] + S[(i - 1) * n + j - 1];
      const double up = H[(i - 1) * W + j] - p.gap_penalty;
      const double left = H[i * W + j - 1] - p.gap_penalty;
      const double h = std::max({0.0, diag, up, left});
      H[i * W + j] = h;
      if (h > best) {
        best = h;
        bi = i;
        bj = j;
      }
    }
  }
  if (best <= 0.0) return std::nullopt;
  Alignment a;
  a.score = best;
  std::size_t i = bi, j = bj;
  while (i > 0 && j > 0 && H[i * W + j] > 0.0) {
    const double h = H[i * W + j];
    if (h == H[(i - 1) * W + j - 1] + S[(i - 1) * n + j - 1]) {
      a.pairs.push_back({i - 1, j - 1});
      --i;
      --j;
    } else if (h == H[(i - 1) * W + j] - p.gap_penalty) {
      --i;
    } else {
      --j;
    }
  }
  std::reverse(a.pairs.begin(), a.pairs.end());
  a.first = a.pairs.front().second;
  a.last = a.pairs.back().second;
  return a;
}

// All non-overlapping local alignments scoring at least the threshold,
// highest first: after each hit its clip span is masked and the search
// repeats.
inline std::vector<Alignment> smith_waterman(std::span<const TopicRef> query, std::span<const ClipSlot> stream,
                                             const AlignmentParams& p) {
  validate_alignment_params(p);
  if (query.empty()) throw ConfigError("sequence query must contain at least one topic");
  const double threshold = p.resolved_threshold(query.size());
  std::vector<bool> masked(stream.size(), false);
  std::vector<Alignment> out;
  while (true) {
    auto a = best_local_alignment(query, stream, p, masked);
    if (!a || a->score < threshold) break;
    for (std::size_t j = a->first; j <= a->last; ++j) masked[j] = true;
    out.push_back(std::move(*a));
  }
  return out;
}

inline std::vector<SearchResult> search_topic_sequence(const Database& db, const std::vector<TopicRef>& topics,
                                                       const AlignmentParams& p = {}) {
  if (topics.empty()) throw ConfigError("sequence query must contain at least one topic");
  if (!p.soft_match) check_activation(p.activation_threshold, db);
  for (const auto& t : topics) detail::check_topic(db, t);
  std::vector<FeatureSpace> spaces;
  for (const auto& t : topics)
    if (std::find(spaces.begin(), spaces.end(), t.space) == spaces.end()) spaces.push_back(t.space);
  std::vector<ClipSlot> stream;
  stream.reserve(db.entries.size());
  for (const auto& e : db.entries) stream.push_back(clip_slot(e, spaces));
  std::vector<SearchResult> out;
  for (const auto& a : smith_waterman(topics, stream, p)) {
    std::vector<std::vector<TopicRef>> matched(a.last - a.first + 1);
    for (const auto& [qi, sj] : a.pairs)
      if (substitution_score(stream[sj], topics[qi], p) > 0.0) matched[sj - a.first].push_back(topics[qi]);
    out.push_back(detail::make_result(db, a.first, a.last, a.score, Strategy::TopicSequence, std::move(matched)));
  }
  return out;
}

// ---- similar clips ---------------------------------------------------------

inline constexpr double kNormalizationTolerance = 1e-6;

// Hellinger distance between two distributions; the shorter input is padded
// with zeros.
inline double hellinger(std::span<const double> p, std::span<const double> q) {
  auto check = [](std::span<const double> d, const char* name) {
    double s = 0.0;
    for (double v : d) {
      if (!(v >= 0.0)) throw ConfigError(std::string("distribution ") + name + " has a negative entry");
      s += v;
    }
    if (std::abs(s - 1.0) > kNormalizationTolerance)
      throw ConfigError(std::string("distribution ") + name + " is not normalized (sum " + std::to_string(s) + ")");
  };
  check(p, "p");
  check(q, "q");
  const std::size_t n = std::max(p.size(), q.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = i < p.size() ? std::sqrt(p[i]) : 0.0;
    const double b = i < q.size() ? std::sqrt(q[i]) : 0.0;
    acc += (a - b) * (a - b);
  }
  return std::min(1.0, std::sqrt(acc) / std::sqrt(2.0));
}

// One query distribution per space (dense over that space's topics).
using SpaceDistributions = std::array<std::optional<std::vector<double>>, 3>;

// Sliding-window ranking: the window score is the sum over offsets of the
// per-clip distance, averaged across the queried spaces. Ascending score,
// ties to the earlier clip.
inline std::vector<SearchResult> search_similar_clips(const Database& db, std::span<const FeatureSpace> spaces,
                                                      std::span<const SpaceDistributions> query, std::size_t k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (query.empty()) throw ConfigError("similar-clips needs at least one query distribution");
  if (spaces.empty()) throw ConfigError("similar-clips needs at least one feature space");
  const std::size_t L = query.size();
  const std::size_t n = db.entries.size();
  if (L > n)
    throw ConfigError("query spans " + std::to_string(L) + " clips but the section holds only " + std::to_string(n));
  for (auto s : spaces) {
    if (db.num_topics(s) == 0) throw ConfigError(std::string("section has no ") + to_string(s) + " model");
    for (const auto& q : query)
      if (!q[space_index(s)]) throw ConfigError(std::string("query lacks a ") + to_string(s) + " distribution");
  }
  // Per-clip distance to each query offset, computed once.
  std::vector<double> dist(n * L, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    for (auto s : spaces) {
      const auto stored = complete_distribution(db.entries[c].in(s), db.num_topics(s));
      for (std::size_t o = 0; o < L; ++o) dist[c * L + o] += hellinger(*query[o][space_index(s)], stored);
    }
    for (std::size_t o = 0; o < L; ++o) dist[c * L + o] /= static_cast<double>(spaces.size());
  }
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i + L <= n; ++i) {
    double s = 0.0;
    for (std::size_t o = 0; o < L; ++o) s += dist[(i + o) * L + o];
    scored.push_back({s, i});
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<SearchResult> out;
  for (std::size_t r = 0; r < std::min(k, scored.size()); ++r) {
    const auto [score, i] = scored[r];
    out.push_back(detail::make_result(db, i, i + L - 1, score, Strategy::SimilarClips, {}));
  }
  return out;
}

// ---- results JSON ----------------------------------------------------------

inline Json to_json(const SearchResult& r) {
  return Json{{"start_clip", r.start_clip}, {"end_clip", r.end_clip}, {"start_frame", r.start_frame},
              {"end_frame", r.end_frame},   {"score", r.score},       {"strategy", to_string(r.strategy)}};
}

inline Json results_json(std::span<const SearchResult> results) {
  Json a = Json::array();
  for (const auto& r : results) a.push_back(to_json(r));
  return a;
}

}  // namespace vidtopic
