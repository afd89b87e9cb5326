#pragma once

// Clip index: every clip annotated with its sparse distribution over the
// secondary topics of each feature space, persisted as one file per section.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vidtopic/error.hpp"
#include "vidtopic/formats.hpp"
#include "vidtopic/ingest.hpp"
#include "vidtopic/lda.hpp"

namespace vidtopic {

struct TopicValue {
  std::int32_t topic = 0;
  double value = 0.0;
  friend bool operator==(const TopicValue&, const TopicValue&) = default;
};

// Sorted by topic index; empty when the clip has no content in the space.
using SparseDistribution = std::vector<TopicValue>;

struct ClipIndexEntry {
  std::int64_t clip_id = 0;
  FrameInterval frames;
  std::array<SparseDistribution, 3> spaces;

  const SparseDistribution& in(FeatureSpace s) const { return spaces[space_index(s)]; }
  double value(FeatureSpace s, int topic) const {
    for (const auto& tv : in(s))
      if (tv.topic == topic) return tv.value;
    return 0.0;
  }
  friend bool operator==(const ClipIndexEntry&, const ClipIndexEntry&) = default;
};

struct ModelRef {
  std::string hash;
  int num_topics = 0;
  std::string path;  // informational; relative to the catalog directory
  friend bool operator==(const ModelRef&, const ModelRef&) = default;
};

struct SectionInfo {
  std::string scene_id = "scene";
  FrameInterval frames;
  friend bool operator==(const SectionInfo&, const SectionInfo&) = default;
};

struct DatabaseHeader {
  SceneConfig scene;
  SectionInfo section;
  std::array<std::optional<ModelRef>, 3> models;
  double store_threshold = 0.0;
  friend bool operator==(const DatabaseHeader&, const DatabaseHeader&) = default;
};

struct Database {
  DatabaseHeader header;
  std::vector<ClipIndexEntry> entries;

  int num_topics(FeatureSpace s) const {
    const auto& m = header.models[space_index(s)];
    return m ? m->num_topics : 0;
  }
  friend bool operator==(const Database&, const Database&) = default;
};

// Per-space documents of one clip. A space without a document (no content
// observed) yields an empty distribution.
struct ClipBundle {
  std::int64_t clip_id = 0;
  FrameInterval frames;
  std::array<std::optional<ClipDocument>, 3> docs;
  friend bool operator==(const ClipBundle&, const ClipBundle&) = default;
};

struct FoldInParams {
  int iterations = 50;
  std::uint64_t seed = 1;
  friend bool operator==(const FoldInParams&, const FoldInParams&) = default;
};

// Seed used to infer one clip in one space; independent of processing order.
inline std::uint64_t fold_in_seed(const FoldInParams& p, std::int64_t clip_id, FeatureSpace s) {
  return mix_seed(p.seed, static_cast<std::uint64_t>(clip_id), space_index(s) + 1);
}

using ModelSet = std::array<const TopicModel*, 3>;

inline SparseDistribution to_sparse(std::span<const double> theta) {
  SparseDistribution out;
  for (std::size_t k = 0; k < theta.size(); ++k)
    if (theta[k] > 0.0) out.push_back({static_cast<std::int32_t>(k), theta[k]});
  return out;
}

inline std::vector<ClipIndexEntry> index_corpus(const ModelSet& models, std::span<const ClipBundle> clips,
                                                const FoldInParams& fold_in = {}) {
  std::array<std::optional<TopicInference>, 3> inference;
  for (auto s : kAllSpaces) {
    const TopicModel* m = models[space_index(s)];
    if (!m) continue;
    if (m->space != s)
      throw ConfigError(std::string("model for ") + to_string(s) + " is a " + to_string(m->space) + " model");
    inference[space_index(s)].emplace(*m);
  }
  std::vector<ClipIndexEntry> entries;
  entries.reserve(clips.size());
  for (const auto& clip : clips) {
    ClipIndexEntry e;
    e.clip_id = clip.clip_id;
    e.frames = clip.frames;
    for (auto s : kAllSpaces) {
      const auto& doc = clip.docs[space_index(s)];
      if (!doc) continue;
      if (doc->space != s) throw ConfigError("clip " + std::to_string(clip.clip_id) + ": document in wrong space slot");
      const auto& inf = inference[space_index(s)];
      if (!inf) continue;
      e.spaces[space_index(s)] = to_sparse(inf->infer(*doc, fold_in.iterations, fold_in_seed(fold_in, clip.clip_id, s)));
    }
    entries.push_back(std::move(e));
  }
  std::sort(entries.begin(), entries.end(),
            [](const ClipIndexEntry& a, const ClipIndexEntry& b) { return a.clip_id < b.clip_id; });
  for (std::size_t i = 1; i < entries.size(); ++i)
    if (entries[i].clip_id != entries[i - 1].clip_id + 1)
      throw ConfigError("clip ids are not contiguous at " + std::to_string(entries[i].clip_id));
  return entries;
}

// Keep pairs with value >= threshold; values are not renormalized.
inline ClipIndexEntry compact_entry(const ClipIndexEntry& e, double store_threshold) {
  if (!(store_threshold >= 0.0 && store_threshold < 1.0)) throw ConfigError("store_threshold must lie in [0,1)");
  ClipIndexEntry out = e;
  for (auto& dist : out.spaces)
    std::erase_if(dist, [&](const TopicValue& tv) { return tv.value < store_threshold; });
  return out;
}

inline Database compact_database(const Database& db, double store_threshold) {
  Database out = db;
  for (auto& e : out.entries) e = compact_entry(e, store_threshold);
  out.header.store_threshold = std::max(db.header.store_threshold, store_threshold);
  return out;
}

// Dense distribution over K topics from a stored (possibly compacted)
// entry: the mass discarded by compaction is spread evenly over the topics
// that were not stored. An empty entry therefore reads as uniform.
inline std::vector<double> complete_distribution(const SparseDistribution& d, int num_topics) {
  std::vector<double> p(static_cast<std::size_t>(num_topics), 0.0);
  double stored = 0.0;
  int missing = num_topics;
  for (const auto& tv : d) {
    if (tv.topic < 0 || tv.topic >= num_topics) throw ConfigError("topic index out of range");
    p[static_cast<std::size_t>(tv.topic)] = tv.value;
    stored += tv.value;
    --missing;
  }
  const double rest = std::max(0.0, 1.0 - stored);
  if (missing > 0) {
    for (auto& v : p)
      if (v == 0.0) v = rest / missing;
  } else if (stored > 0.0) {
    for (auto& v : p) v /= stored;
  }
  // Re-normalize against rounding.
  double s = 0.0;
  for (double v : p) s += v;
  if (s > 0.0)
    for (auto& v : p) v /= s;
  return p;
}

// ---- persistence -----------------------------------------------------------

namespace detail {

inline Json dist_json(const SparseDistribution& d) {
  Json a = Json::array();
  for (const auto& tv : d) a.push_back(Json::array({tv.topic, tv.value}));
  return a;
}

inline SparseDistribution dist_from_json(const Json& a) {
  SparseDistribution d;
  for (const auto& p : a) d.push_back({p.at(0).get<std::int32_t>(), p.at(1).get<double>()});
  return d;
}

inline std::string entry_line(const ClipIndexEntry& e) {
  Json j{{"clip", e.clip_id}, {"frames", Json::array({e.frames.begin, e.frames.end})}};
  for (auto s : kAllSpaces) j[std::string(1, space_prefix(s))] = dist_json(e.in(s));
  return j.dump();
}

}  // namespace detail

inline std::string database_text(const Database& db) {
  std::string body;
  for (const auto& e : db.entries) {
    body += detail::entry_line(e);
    body += '\n';
  }
  Json models = Json::object();
  for (auto s : kAllSpaces) {
    const auto& m = db.header.models[space_index(s)];
    models[to_string(s)] = m ? Json{{"hash", m->hash}, {"K", m->num_topics}, {"path", m->path}} : Json(nullptr);
  }
  Json header{{"format", "vidtopic-db"},
              {"version", 1},
              {"scene", to_json(db.header.scene)},
              {"section", Json{{"scene", db.header.section.scene_id},
                               {"frames", Json::array({db.header.section.frames.begin, db.header.section.frames.end})}}},
              {"models", std::move(models)},
              {"store_threshold", db.header.store_threshold},
              {"entry_count", db.entries.size()},
              {"entries_digest", hex64(fnv1a(body))}};
  return header.dump() + "\n" + body;
}

inline void save_database(const Database& db, const std::string& path) { write_text_file(path, database_text(db)); }

inline Database parse_database(const std::string& text, const std::string& what = "database") {
  const auto nl = text.find('\n');
  if (nl == std::string::npos) throw FormatError(what + ": missing header line");
  const Json h = parse_json(std::string_view(text).substr(0, nl), what + " header");
  Database db;
  std::size_t expected = 0;
  std::string digest;
  try {
    if (json_get_or<std::string>(h, "format", "") != "vidtopic-db") throw FormatError(what + ": not a database file");
    db.header.scene = scene_from_json(h.at("scene"));
    db.header.section.scene_id = h.at("section").at("scene").get<std::string>();
    db.header.section.frames = {h.at("section").at("frames").at(0).get<std::int64_t>(),
                                h.at("section").at("frames").at(1).get<std::int64_t>()};
    for (auto s : kAllSpaces) {
      const auto& mj = h.at("models").at(to_string(s));
      if (mj.is_null()) continue;
      db.header.models[space_index(s)] =
          ModelRef{mj.at("hash").get<std::string>(), mj.at("K").get<int>(), json_get_or<std::string>(mj, "path", "")};
    }
    db.header.store_threshold = json_get<double>(h, "store_threshold");
    expected = json_get<std::size_t>(h, "entry_count");
    digest = json_get<std::string>(h, "entries_digest");
  } catch (const Json::exception& e) {
    throw FormatError(what + " header: " + e.what());
  }
  const std::string_view body = std::string_view(text).substr(nl + 1);
  if (hex64(fnv1a(body)) != digest) throw FormatError(what + ": corrupt or truncated (checksum mismatch)");
  std::size_t pos = 0;
  while (pos < body.size()) {
    const auto end = body.find('\n', pos);
    if (end == std::string_view::npos) throw FormatError(what + ": truncated entry line");
    const Json j = parse_json(body.substr(pos, end - pos), what + " entry");
    pos = end + 1;
    ClipIndexEntry e;
    try {
      e.clip_id = json_get<std::int64_t>(j, "clip");
      e.frames = {j.at("frames").at(0).get<std::int64_t>(), j.at("frames").at(1).get<std::int64_t>()};
      for (auto s : kAllSpaces)
        if (auto it = j.find(std::string(1, space_prefix(s))); it != j.end()) e.spaces[space_index(s)] = detail::dist_from_json(*it);
    } catch (const Json::exception& ex) {
      throw FormatError(what + " entry: " + ex.what());
    }
    db.entries.push_back(std::move(e));
  }
  if (db.entries.size() != expected)
    throw FormatError(what + ": expected " + std::to_string(expected) + " entries, found " + std::to_string(db.entries.size()));
  for (std::size_t i = 1; i < db.entries.size(); ++i)
    if (db.entries[i].clip_id != db.entries[i - 1].clip_id + 1) throw FormatError(what + ": entries are not contiguous");
  return db;
}

// Throws ModelMismatchError when a supplied model's fingerprint differs
// from the one recorded in the header.
inline void verify_models(const Database& db, const ModelSet& models) {
  for (auto s : kAllSpaces) {
    const TopicModel* m = models[space_index(s)];
    const auto& ref = db.header.models[space_index(s)];
    if (!m && !ref) continue;
    if (!m || !ref)
      throw ModelMismatchError(std::string("database and supplied models disagree on the presence of a ") + to_string(s) +
                               " model");
    const auto h = model_hash(*m);
    if (h != ref->hash)
      throw ModelMismatchError(std::string(to_string(s)) + " model hash " + h + " does not match database header " +
                               ref->hash);
  }
}

inline Database load_database(const std::string& path, const ModelSet* models = nullptr) {
  Database db = parse_database(read_text_file(path), path);
  if (models) verify_models(db, *models);
  return db;
}

struct DatabaseStats {
  std::size_t bytes = 0;
  std::size_t clips = 0;
  double mean_nonzero_per_clip = 0.0;  // all spaces together
  std::array<double, 3> mean_nonzero_by_space{};
  std::array<std::size_t, 3> pairs_by_space{};
  std::array<std::size_t, 3> clips_with_content{};
};

inline DatabaseStats database_stats(const Database& db) {
  DatabaseStats st;
  st.bytes = database_text(db).size();
  st.clips = db.entries.size();
  std::size_t total = 0;
  for (const auto& e : db.entries)
    for (auto s : kAllSpaces) {
      const auto n = e.in(s).size();
      st.pairs_by_space[space_index(s)] += n;
      if (n > 0) ++st.clips_with_content[space_index(s)];
      total += n;
    }
  if (st.clips > 0) {
    st.mean_nonzero_per_clip = static_cast<double>(total) / static_cast<double>(st.clips);
    for (auto s : kAllSpaces)
      st.mean_nonzero_by_space[space_index(s)] =
          static_cast<double>(st.pairs_by_space[space_index(s)]) / static_cast<double>(st.clips);
  }
  return st;
}

inline Json to_json(const DatabaseStats& st) {
  Json by_space = Json::object();
  for (auto s : kAllSpaces)
    by_space[to_string(s)] = Json{{"mean_nonzero_per_clip", st.mean_nonzero_by_space[space_index(s)]},
                                  {"stored_pairs", st.pairs_by_space[space_index(s)]},
                                  {"clips_with_content", st.clips_with_content[space_index(s)]}};
  return Json{{"bytes", st.bytes}, {"clips", st.clips}, {"mean_nonzero_per_clip", st.mean_nonzero_per_clip},
              {"spaces", std::move(by_space)}};
}

}  // namespace vidtopic
