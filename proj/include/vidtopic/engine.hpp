#pragma once

// A loaded, immutable snapshot of one scene's artifacts (secondary models,
// database sections, frame source) and query execution against it.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vidtopic/error.hpp"
#include "vidtopic/formats.hpp"
#include "vidtopic/index.hpp"
#include "vidtopic/query.hpp"
#include "vidtopic/retrieval.hpp"
#include "vidtopic/scene.hpp"

namespace vidtopic {

struct Section {
  std::string path;  // relative to the catalog directory
  Database db;
};

struct Catalog {
  std::string scene_id;
  SceneConfig scene;
  std::array<std::shared_ptr<const TopicModel>, 3> models;  // secondary
  std::array<std::string, 3> model_paths;
  std::vector<Section> sections;
  std::optional<Scenario> scenario;  // lets frames be regenerated on demand
  std::uint64_t simulation_seed = 0;
  std::string frames_path;  // absolute; used when there is no scenario
  IngestParams ingest;
  FoldInParams fold_in;
  double support_threshold = 0.1;
  Json stats = Json::object();

  ModelSet model_set() const { return {models[0].get(), models[1].get(), models[2].get()}; }

  // Databases matching the selector. A frame range keeps only the clips
  // that lie entirely inside it.
  std::vector<Database> select(const SectionSelector& sel) const {
    std::vector<Database> out;
    bool scene_known = false;
    for (const auto& s : sections) {
      if (s.db.header.section.scene_id != sel.scene) continue;
      scene_known = true;
      if (!sel.range) {
        out.push_back(s.db);
        continue;
      }
      Database d;
      d.header = s.db.header;
      for (const auto& e : s.db.entries)
        if (e.frames.begin >= sel.range->begin && e.frames.end <= sel.range->end) d.entries.push_back(e);
      if (d.entries.empty()) continue;
      d.header.section.frames = {d.entries.front().frames.begin, d.entries.back().frames.end};
      out.push_back(std::move(d));
    }
    if (!scene_known) throw NotFoundError("unknown section '" + sel.scene + "'");
    if (out.empty()) throw NotFoundError("section '" + sel.scene + "' has no clips in the requested range");
    return out;
  }

  const ClipIndexEntry* find_clip(std::int64_t clip_id) const {
    for (const auto& s : sections)
      for (const auto& e : s.db.entries)
        if (e.clip_id == clip_id) return &e;
    return nullptr;
  }

  std::vector<CellMeasurementFrame> frames(FrameInterval iv) const {
    if (iv.begin < 0 || iv.end <= iv.begin) throw ConfigError("frame range must satisfy 0 <= start < end");
    std::vector<CellMeasurementFrame> out;
    if (scenario) {
      if (iv.end > scenario->total_frames)
        throw NotFoundError("frames " + std::to_string(iv.begin) + ".." + std::to_string(iv.end) +
                            " exceed the scene length " + std::to_string(scenario->total_frames));
      SceneSimulator sim(scene, *scenario, simulation_seed);
      for (auto t = iv.begin; t < iv.end; ++t) out.push_back(sim.frame(t));
      return out;
    }
    if (frames_path.empty()) throw NotFoundError("catalog has no frame source");
    FrameFileReader reader(frames_path);
    while (auto f = reader.next()) {
      if (f->frame_index >= iv.end) break;
      if (f->frame_index >= iv.begin) out.push_back(std::move(*f));
    }
    if (static_cast<std::int64_t>(out.size()) != iv.end - iv.begin)
      throw NotFoundError("frames " + std::to_string(iv.begin) + ".." + std::to_string(iv.end) +
                          " are not all present in the frame file");
    return out;
  }
};

// ---- catalog file ----------------------------------------------------------

inline Json catalog_json(const Catalog& c, const std::string& scenario_file, const std::string& frames_file) {
  Json models = Json::object();
  for (auto s : kAllSpaces)
    models[to_string(s)] = c.models[space_index(s)] ? Json(c.model_paths[space_index(s)]) : Json(nullptr);
  Json sections = Json::array();
  for (const auto& s : c.sections)
    sections.push_back({{"scene", s.db.header.section.scene_id},
                        {"frames", {s.db.header.section.frames.begin, s.db.header.section.frames.end}},
                        {"path", s.path}});
  return Json{{"format", "vidtopic-catalog"},
              {"version", 1},
              {"scene_id", c.scene_id},
              {"scene", to_json(c.scene)},
              {"models", models},
              {"sections", sections},
              {"scenario", scenario_file.empty() ? Json(nullptr) : Json(scenario_file)},
              {"simulation_seed", c.simulation_seed},
              {"frames", frames_file.empty() ? Json(nullptr) : Json(frames_file)},
              {"ingest", {{"persistence_fraction", c.ingest.persistence_fraction}, {"connectivity", c.ingest.connectivity}}},
              {"fold_in", {{"iterations", c.fold_in.iterations}, {"seed", c.fold_in.seed}}},
              {"support_threshold", c.support_threshold}};
}

// Accepts the catalog file or the directory holding catalog.json.
inline Catalog load_catalog(const std::string& path) {
  namespace fs = std::filesystem;
  fs::path file = path;
  if (fs::is_directory(file)) file /= "catalog.json";
  if (!fs::exists(file)) throw NotFoundError("no catalog at " + file.string());
  const fs::path dir = file.parent_path();
  const Json j = parse_json(read_text_file(file.string()), file.string());
  if (json_get_or<std::string>(j, "format", "") != "vidtopic-catalog")
    throw FormatError(file.string() + " is not a catalog file");
  Catalog c;
  c.scene_id = json_get<std::string>(j, "scene_id");
  c.scene = scene_from_json(j.at("scene"));
  for (auto s : kAllSpaces) {
    const auto& m = j.at("models").at(to_string(s));
    if (m.is_null()) continue;
    c.model_paths[space_index(s)] = m.get<std::string>();
    auto model = load_model((dir / m.get<std::string>()).string());
    if (model.space != s) throw FormatError("catalog lists a " + std::string(to_string(model.space)) + " model as " + to_string(s));
    if (model.stage != ModelStage::Secondary) throw FormatError("catalog models must be secondary");
    c.models[space_index(s)] = std::make_shared<const TopicModel>(std::move(model));
  }
  const ModelSet ms = c.model_set();
  for (const auto& s : j.at("sections")) {
    Section sec;
    sec.path = json_get<std::string>(s, "path");
    sec.db = load_database((dir / sec.path).string(), &ms);
    c.sections.push_back(std::move(sec));
  }
  if (const auto& sc = j.at("scenario"); !sc.is_null()) {
    c.scenario = scenario_from_json(parse_json(read_text_file((dir / sc.get<std::string>()).string()), "scenario"));
    c.simulation_seed = json_get<std::uint64_t>(j, "simulation_seed");
  }
  if (const auto& fr = j.at("frames"); !fr.is_null()) c.frames_path = (dir / fr.get<std::string>()).string();
  if (j.contains("ingest")) {
    c.ingest.persistence_fraction = json_get_or<double>(j.at("ingest"), "persistence_fraction", 0.8);
    c.ingest.connectivity = json_get_or<int>(j.at("ingest"), "connectivity", 4);
  }
  if (j.contains("fold_in")) {
    c.fold_in.iterations = json_get_or<int>(j.at("fold_in"), "iterations", 50);
    c.fold_in.seed = json_get_or<std::uint64_t>(j.at("fold_in"), "seed", 1);
  }
  c.support_threshold = json_get_or<double>(j, "support_threshold", 0.1);
  if (fs::exists(dir / "stats.json")) c.stats = parse_json(read_text_file((dir / "stats.json").string()), "stats");
  return c;
}

// ---- execution -------------------------------------------------------------

struct QueryOutcome {
  std::vector<SearchResult> results;
  double elapsed_ms = 0.0;
};

namespace detail {

inline std::vector<SpaceDistributions> similar_query_distributions(const Catalog& c, const QuerySpec& spec,
                                                                   const SimilarQuery& q) {
  if (!q.distributions.empty()) {
    for (const auto& d : q.distributions)
      for (auto s : spec.spaces) {
        const auto& v = d[space_index(s)];
        const auto* m = c.models[space_index(s)].get();
        if (!m) throw ConfigError(std::string("no ") + to_string(s) + " model is loaded");
        if (!v || v->size() > m->topics.size())
          throw ConfigError(std::string("query distribution for ") + to_string(s) + " must have at most " +
                            std::to_string(m->topics.size()) + " entries");
      }
    return q.distributions;
  }
  if (q.example_clips) {
    for (const auto& s : c.sections) {
      if (s.db.entries.empty()) continue;
      const auto lo = s.db.entries.front().clip_id, hi = s.db.entries.back().clip_id;
      if (q.example_clips->first >= lo && q.example_clips->second <= hi)
        return entries_to_distribution(s.db, q.example_clips->first, q.example_clips->second);
    }
    throw NotFoundError("example clips " + std::to_string(q.example_clips->first) + ".." +
                        std::to_string(q.example_clips->second) + " are not stored in one section");
  }
  const auto frames = c.frames(*q.example_frames);
  return example_to_distribution(frames, c.scene, c.model_set(), c.ingest, c.fold_in);
}

}  // namespace detail

inline std::vector<SearchResult> run_query(const Catalog& c, const QuerySpec& spec) {
  const auto dbs = c.select(spec.section);
  std::vector<SearchResult> out;
  auto append = [&](std::vector<SearchResult> r) { out.insert(out.end(), r.begin(), r.end()); };
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SingleTopicQuery>) {
          for (const auto& db : dbs) append(search_single_topic(db, s.topic, s.activation));
        } else if constexpr (std::is_same_v<T, CoOccurrenceQuery>) {
          for (const auto& db : dbs) append(search_cooccurrence(db, s.topics, s.activation));
        } else if constexpr (std::is_same_v<T, SequenceQuery>) {
          for (const auto& db : dbs) append(search_topic_sequence(db, s.topics, s.params));
        } else {
          const auto query = detail::similar_query_distributions(c, spec, s);
          bool searched = false;
          for (const auto& db : dbs) {
            if (query.size() > db.entries.size()) continue;
            append(search_similar_clips(db, spec.spaces, query, s.k));
            searched = true;
          }
          if (!searched)
            throw ConfigError("query spans " + std::to_string(query.size()) + " clips, longer than every section");
          std::stable_sort(out.begin(), out.end(), [](const SearchResult& a, const SearchResult& b) {
            if (a.score != b.score) return a.score < b.score;
            return a.start_clip < b.start_clip;
          });
          if (out.size() > s.k) out.resize(s.k);
        }
      },
      spec.strategy);
  return out;
}

inline QueryOutcome execute(const Catalog& c, const QuerySpec& spec) {
  const auto t0 = std::chrono::steady_clock::now();
  QueryOutcome o;
  o.results = run_query(c, spec);
  o.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return o;
}

// Frames of one stored clip, for playback.
inline Json clip_json(const Catalog& c, std::int64_t clip_id) {
  const auto* e = c.find_clip(clip_id);
  if (!e) throw NotFoundError("unknown clip " + std::to_string(clip_id));
  Json frames = Json::array();
  for (const auto& f : c.frames(e->frames)) frames.push_back(to_json(f));
  Json dists = Json::object();
  for (auto s : kAllSpaces)
    if (c.models[space_index(s)]) dists[to_string(s)] = detail::dist_json(e->in(s));
  return Json{{"clip", clip_id},
              {"frames", {e->frames.begin, e->frames.end}},
              {"grid", {c.scene.grid_w, c.scene.grid_h}},
              {"distributions", dists},
              {"cell_frames", frames}};
}

}  // namespace vidtopic
