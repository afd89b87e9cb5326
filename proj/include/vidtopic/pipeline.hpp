#pragma once

// Orchestration: simulate -> ingest -> train -> refine -> index, either in
// memory or stage by stage over a working directory.
//
// Directory layout:
//   config.json            resolved pipeline configuration
//   scenario.json          scripted scene (when simulated)
//   ground_truth.json
//   frames.jsonl           cell-measurement frames (optional)
//   corpus/clips.json      clip count and geometry
//   corpus/<space>.jsonl   non-empty clip documents
//   models/<space>.primary.json, models/<space>.secondary.json
//   sections/<scene>_<begin>_<end>.db
//   catalog.json, stats.json

#include <array>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <chrono>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vidtopic/engine.hpp"
#include "vidtopic/error.hpp"
#include "vidtopic/eval.hpp"
#include "vidtopic/formats.hpp"
#include "vidtopic/index.hpp"
#include "vidtopic/ingest.hpp"
#include "vidtopic/lda.hpp"
#include "vidtopic/refinery.hpp"
#include "vidtopic/scene.hpp"

namespace vidtopic {

struct PipelineConfig {
  std::string scene_id = "scene";
  SceneParams scene;
  std::uint64_t simulation_seed = 1;
  IngestParams ingest;
  std::array<LdaParams, 3> lda = default_lda();
  std::array<std::optional<int>, 3> num_topics;  // nullopt: pick from topic_grid by held-out perplexity
  std::vector<int> topic_grid{4, 6, 8, 10, 12};
  RefineryParams refinery;
  FoldInParams fold_in;
  double store_threshold = 0.05;
  std::int64_t section_frames = 0;  // 0: one section for the whole stream
  bool write_frames = false;

  static std::array<LdaParams, 3> default_lda() {
    std::array<LdaParams, 3> p;
    for (std::size_t i = 0; i < 3; ++i) {
      p[i].alpha = 0.1;
      p[i].seed = 11 + i;
    }
    return p;
  }
};

inline void validate_pipeline_config(const PipelineConfig& c) {
  if (c.scene_id.empty() || c.scene_id.find_first_not_of(
                                "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-") != std::string::npos)
    throw ConfigError("scene_id must be a non-empty [A-Za-z0-9_-] name");
  build_scene_config(c.scene);
  validate_ingest_params(c.ingest);
  validate_refinery_params(c.refinery);
  if (c.fold_in.iterations < 1) throw ConfigError("fold_in.iterations must be >= 1");
  if (!(c.store_threshold >= 0.0 && c.store_threshold < 1.0)) throw ConfigError("store_threshold must lie in [0,1)");
  if (c.section_frames < 0) throw ConfigError("section_frames must be >= 0");
  if (c.section_frames > 0 && c.section_frames % c.scene.frames_per_clip != 0)
    throw ConfigError("section_frames must be a multiple of frames_per_clip");
}

// ---- config JSON -----------------------------------------------------------

namespace detail {

inline void reject_unknown(const Json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return it.key() == k; }) == known.end())
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

}  // namespace detail

inline Json to_json(const PipelineConfig& c) {
  Json lda = Json::object();
  for (auto s : kAllSpaces) {
    const auto& p = c.lda[space_index(s)];
    const auto& k = c.num_topics[space_index(s)];
    lda[to_string(s)] = Json{{"num_topics", k ? Json(*k) : Json("auto")},
                             {"alpha", p.alpha ? Json(*p.alpha) : Json(nullptr)},
                             {"beta", p.beta},
                             {"iterations", p.iterations},
                             {"seed", p.seed}};
  }
  return Json{{"scene_id", c.scene_id},
              {"scene", Json{{"frame_width_px", c.scene.frame_width_px},
                             {"frame_height_px", c.scene.frame_height_px},
                             {"cell_size_px", c.scene.cell_size_px},
                             {"frames_per_clip", c.scene.frames_per_clip},
                             {"fps", {c.scene.fps.num, c.scene.fps.den}},
                             {"flow_threshold", c.scene.flow_threshold},
                             {"size_threshold_cells", c.scene.size_threshold_cells}}},
              {"simulation_seed", c.simulation_seed},
              {"ingest", {{"persistence_fraction", c.ingest.persistence_fraction}, {"connectivity", c.ingest.connectivity}}},
              {"lda", lda},
              {"topic_grid", c.topic_grid},
              {"refinery", {{"support_threshold", c.refinery.support_threshold},
                            {"direction_threshold", c.refinery.direction_threshold},
                            {"overlap_threshold", c.refinery.overlap_threshold},
                            {"connectivity", c.refinery.connectivity}}},
              {"fold_in", {{"iterations", c.fold_in.iterations}, {"seed", c.fold_in.seed}}},
              {"store_threshold", c.store_threshold},
              {"section_frames", c.section_frames},
              {"write_frames", c.write_frames}};
}

// Every key is optional; absent keys keep their defaults.
inline PipelineConfig pipeline_config_from_json(const Json& j) {
  using detail::reject_unknown;
  PipelineConfig c;
  try {
    reject_unknown(j,
                   {"scene_id", "scene", "simulation_seed", "ingest", "lda", "topic_grid", "refinery", "fold_in",
                    "store_threshold", "section_frames", "write_frames"},
                   "config");
    c.scene_id = json_get_or<std::string>(j, "scene_id", c.scene_id);
    if (j.contains("scene")) {
      const auto& s = j.at("scene");
      reject_unknown(s,
                     {"frame_width_px", "frame_height_px", "cell_size_px", "frames_per_clip", "fps", "flow_threshold",
                      "size_threshold_cells"},
                     "scene");
      auto& p = c.scene;
      p.frame_width_px = json_get_or<int>(s, "frame_width_px", p.frame_width_px);
      p.frame_height_px = json_get_or<int>(s, "frame_height_px", p.frame_height_px);
      p.cell_size_px = json_get_or<int>(s, "cell_size_px", p.cell_size_px);
      p.frames_per_clip = json_get_or<int>(s, "frames_per_clip", p.frames_per_clip);
      if (s.contains("fps")) {
        const auto& f = s.at("fps");
        if (f.is_array() && f.size() == 2) p.fps = {f[0].get<std::int64_t>(), f[1].get<std::int64_t>()};
        else if (f.is_number_integer()) p.fps = {f.get<std::int64_t>(), 1};
        else throw ConfigError("scene.fps must be an integer or [num, den]");
      }
      p.flow_threshold = json_get_or<double>(s, "flow_threshold", p.flow_threshold);
      p.size_threshold_cells = json_get_or<int>(s, "size_threshold_cells", p.size_threshold_cells);
    }
    c.simulation_seed = json_get_or<std::uint64_t>(j, "simulation_seed", c.simulation_seed);
    if (j.contains("ingest")) {
      const auto& s = j.at("ingest");
      reject_unknown(s, {"persistence_fraction", "connectivity"}, "ingest");
      c.ingest.persistence_fraction = json_get_or<double>(s, "persistence_fraction", c.ingest.persistence_fraction);
      c.ingest.connectivity = json_get_or<int>(s, "connectivity", c.ingest.connectivity);
    }
    if (j.contains("lda")) {
      const auto& l = j.at("lda");
      reject_unknown(l, {"motion", "persistence", "size", "all"}, "lda");
      auto apply = [&](const Json& s, std::size_t i, const std::string& where) {
        reject_unknown(s, {"num_topics", "alpha", "beta", "iterations", "seed"}, where);
        auto& p = c.lda[i];
        if (s.contains("num_topics")) {
          const auto& k = s.at("num_topics");
          if (k.is_string() && k.get<std::string>() == "auto") c.num_topics[i].reset();
          else c.num_topics[i] = k.get<int>();
        }
        if (s.contains("alpha")) {
          const auto& a = s.at("alpha");
          if (a.is_null() || (a.is_string() && a.get<std::string>() == "50/K")) p.alpha.reset();
          else p.alpha = a.get<double>();
        }
        p.beta = json_get_or<double>(s, "beta", p.beta);
        p.iterations = json_get_or<int>(s, "iterations", p.iterations);
        p.seed = json_get_or<std::uint64_t>(s, "seed", p.seed);
      };
      if (l.contains("all"))
        for (std::size_t i = 0; i < 3; ++i) apply(l.at("all"), i, "lda.all");
      for (auto s : kAllSpaces)
        if (l.contains(to_string(s))) apply(l.at(to_string(s)), space_index(s), std::string("lda.") + to_string(s));
    }
    if (j.contains("topic_grid")) c.topic_grid = j.at("topic_grid").get<std::vector<int>>();
    if (j.contains("refinery")) {
      const auto& r = j.at("refinery");
      reject_unknown(r, {"support_threshold", "direction_threshold", "overlap_threshold", "connectivity"}, "refinery");
      c.refinery.support_threshold = json_get_or<double>(r, "support_threshold", c.refinery.support_threshold);
      c.refinery.direction_threshold = json_get_or<double>(r, "direction_threshold", c.refinery.direction_threshold);
      c.refinery.overlap_threshold = json_get_or<double>(r, "overlap_threshold", c.refinery.overlap_threshold);
      c.refinery.connectivity = json_get_or<int>(r, "connectivity", c.refinery.connectivity);
    }
    if (j.contains("fold_in")) {
      const auto& f = j.at("fold_in");
      reject_unknown(f, {"iterations", "seed"}, "fold_in");
      c.fold_in.iterations = json_get_or<int>(f, "iterations", c.fold_in.iterations);
      c.fold_in.seed = json_get_or<std::uint64_t>(f, "seed", c.fold_in.seed);
    }
    c.store_threshold = json_get_or<double>(j, "store_threshold", c.store_threshold);
    c.section_frames = json_get_or<std::int64_t>(j, "section_frames", c.section_frames);
    c.write_frames = json_get_or<bool>(j, "write_frames", c.write_frames);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const FormatError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate_pipeline_config(c);
  return c;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
  return pipeline_config_from_json(parse_json(read_text_file(path), path));
}

// ---- stages ----------------------------------------------------------------

template <class F>
auto run_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e.what());
  }
}

using FrameSource = std::function<std::optional<CellMeasurementFrame>()>;

inline FrameSource simulator_source(const SceneSimulator& sim) {
  return [&sim, t = std::int64_t{0}]() mutable -> std::optional<CellMeasurementFrame> {
    if (t >= sim.total_frames()) return std::nullopt;
    return sim.frame(t++);
  };
}

struct IngestOutput {
  std::vector<ClipBundle> clips;
  std::int64_t frames_read = 0;

  std::vector<ClipDocument> corpus(FeatureSpace s) const {
    std::vector<ClipDocument> out;
    for (const auto& c : clips)
      if (const auto& d = c.docs[space_index(s)]) out.push_back(*d);
    return out;
  }
};

// Cuts the frame stream into clips of F frames and extracts the three
// documents of each. Empty documents are left out of the bundles. The
// stream must start on a clip boundary and have consecutive frame indices.
inline IngestOutput ingest_frames(const FrameSource& next, const SceneConfig& cfg, const IngestParams& params,
                                  const std::function<void(const CellMeasurementFrame&)>& tap = {}) {
  IngestOutput out;
  std::vector<CellMeasurementFrame> buf;
  buf.reserve(static_cast<std::size_t>(cfg.frames_per_clip));
  std::optional<std::int64_t> expected;
  while (auto f = next()) {
    if (!expected) {
      if (f->frame_index % cfg.frames_per_clip != 0)
        throw FormatError("frame stream must start on a clip boundary (first frame " + std::to_string(f->frame_index) + ")");
    } else if (f->frame_index != *expected) {
      throw FormatError("frame " + std::to_string(*expected) + " missing (got " + std::to_string(f->frame_index) + ")");
    }
    expected = f->frame_index + 1;
    if (tap) tap(*f);
    ++out.frames_read;
    buf.push_back(std::move(*f));
    if (static_cast<int>(buf.size()) == cfg.frames_per_clip) {
      auto docs = extract_clip_documents(buf, cfg, params);
      ClipBundle b;
      b.clip_id = docs[0].clip_id;
      b.frames = docs[0].frames;
      for (auto s : kAllSpaces)
        if (!docs[space_index(s)].words.empty()) b.docs[space_index(s)] = std::move(docs[space_index(s)]);
      out.clips.push_back(std::move(b));
      buf.clear();
    }
  }
  return out;
}

using ModelArray = std::array<std::optional<TopicModel>, 3>;

// One model per space with content, trained concurrently.
inline ModelArray train_models(const PipelineConfig& cfg, const SceneConfig& scene, const IngestOutput& data) {
  for (auto s : kAllSpaces) {
    LdaParams p = cfg.lda[space_index(s)];
    p.num_topics = cfg.num_topics[space_index(s)].value_or(1);
    validate_lda_params(p);
  }
  std::array<std::future<std::optional<TopicModel>>, 3> jobs;
  for (auto s : kAllSpaces) {
    jobs[space_index(s)] = std::async(std::launch::async, [&, s]() -> std::optional<TopicModel> {
      const auto corpus = data.corpus(s);
      if (corpus.empty()) return std::nullopt;
      LdaParams p = cfg.lda[space_index(s)];
      if (cfg.num_topics[space_index(s)]) p.num_topics = *cfg.num_topics[space_index(s)];
      else p.num_topics = select_topic_count(corpus, scene, p, cfg.topic_grid);
      return train_lda(corpus, scene, p);
    });
  }
  ModelArray out;
  for (std::size_t i = 0; i < 3; ++i) out[i] = jobs[i].get();
  return out;
}

inline ModelArray refine_models(const PipelineConfig& cfg, const ModelArray& primary) {
  ModelArray out;
  for (auto s : kAllSpaces) {
    const auto& p = primary[space_index(s)];
    if (!p) continue;
    auto sec = build_secondary_model(*p, cfg.refinery);
    if (sec.topics.empty()) throw ConfigError(std::string("no ") + to_string(s) + " topic survived refinement");
    out[space_index(s)] = std::move(sec);
  }
  return out;
}

inline std::string model_file(FeatureSpace s, ModelStage stage) {
  return std::string("models/") + to_string(s) + "." + to_string(stage) + ".json";
}

inline std::string section_file(const std::string& scene_id, FrameInterval iv) {
  return "sections/" + scene_id + "_" + std::to_string(iv.begin) + "_" + std::to_string(iv.end) + ".db";
}

struct IndexOutput {
  Database full;                  // every clip, nothing discarded
  std::vector<Section> sections;  // compacted
};

inline IndexOutput index_clips(const PipelineConfig& cfg, const SceneConfig& scene, const ModelArray& secondary,
                               const IngestOutput& data) {
  ModelSet ms{};
  for (std::size_t i = 0; i < 3; ++i) ms[i] = secondary[i] ? &*secondary[i] : nullptr;
  IndexOutput out;
  out.full.entries = index_corpus(ms, data.clips, cfg.fold_in);
  out.full.header.scene = scene;
  out.full.header.store_threshold = 0.0;
  for (auto s : kAllSpaces)
    if (const auto& m = secondary[space_index(s)])
      out.full.header.models[space_index(s)] = ModelRef{model_hash(*m), m->num_topics(), model_file(s, ModelStage::Secondary)};
  const FrameInterval all = out.full.entries.empty()
                                ? FrameInterval{0, 0}
                                : FrameInterval{out.full.entries.front().frames.begin, out.full.entries.back().frames.end};
  out.full.header.section = SectionInfo{cfg.scene_id, all};
  const Database compact = compact_database(out.full, cfg.store_threshold);
  if (cfg.section_frames <= 0 || compact.entries.empty()) {
    out.sections.push_back({section_file(cfg.scene_id, all), compact});
    return out;
  }
  for (std::int64_t b = all.begin - all.begin % cfg.section_frames; b < all.end; b += cfg.section_frames) {
    Database d;
    d.header = compact.header;
    for (const auto& e : compact.entries)
      if (e.frames.begin >= b && e.frames.begin < b + cfg.section_frames) d.entries.push_back(e);
    if (d.entries.empty()) continue;
    const FrameInterval iv{d.entries.front().frames.begin, d.entries.back().frames.end};
    d.header.section = SectionInfo{cfg.scene_id, iv};
    out.sections.push_back({section_file(cfg.scene_id, iv), std::move(d)});
  }
  return out;
}

// ---- whole pipeline --------------------------------------------------------

struct PipelineResult {
  PipelineConfig config;
  SceneConfig scene;
  std::optional<Scenario> scenario;
  std::string frames_path;  // input frame file when not simulated
  GroundTruthLog ground_truth;
  IngestOutput data;
  ModelArray primary;
  ModelArray secondary;
  IndexOutput index;
  std::array<double, 5> stage_ms{};  // simulate+ingest, train, refine, index, total
};

inline Json pipeline_stats(const PipelineResult& r) {
  Json spaces = Json::object();
  for (auto s : kAllSpaces) {
    const auto i = space_index(s);
    Json sj{{"documents", r.data.corpus(s).size()}};
    std::int64_t tokens = 0;
    for (const auto& d : r.data.corpus(s)) tokens += d.length();
    sj["tokens"] = tokens;
    if (r.primary[i] && r.secondary[i]) {
      sj["model_stats"] = to_json(model_stats(*r.primary[i], *r.secondary[i], r.config.refinery.support_threshold));
      sj["dedup_merged"] = r.secondary[i]->remap.size();
      sj["dropped_topics"] = r.secondary[i]->dropped_topics.size();
    }
    spaces[to_string(s)] = sj;
  }
  std::size_t compact_bytes = 0;
  for (const auto& s : r.index.sections) compact_bytes += database_text(s.db).size();
  const std::size_t full_bytes = database_text(r.index.full).size();
  Json sections = Json::array();
  for (const auto& s : r.index.sections) {
    auto st = to_json(database_stats(s.db));
    st["path"] = s.path;
    sections.push_back(st);
  }
  return Json{{"scene_id", r.config.scene_id},
              {"frames", r.data.frames_read},
              {"clips", r.data.clips.size()},
              {"spaces", spaces},
              {"database", {{"uncompacted_bytes", full_bytes},
                            {"compacted_bytes", compact_bytes},
                            {"compaction_ratio", full_bytes > 0 ? static_cast<double>(compact_bytes) / full_bytes : 0.0},
                            {"store_threshold", r.config.store_threshold},
                            {"sections", sections}}}};
}

namespace detail {

inline PipelineResult finish_pipeline(PipelineResult r) {
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::time_point a) { return std::chrono::duration<double, std::milli>(clock::now() - a).count(); };
  auto t = clock::now();
  r.primary = run_stage("train", [&] { return train_models(r.config, r.scene, r.data); });
  r.stage_ms[1] = ms(t);
  t = clock::now();
  r.secondary = run_stage("refine", [&] { return refine_models(r.config, r.primary); });
  r.stage_ms[2] = ms(t);
  t = clock::now();
  r.index = run_stage("index", [&] { return index_clips(r.config, r.scene, r.secondary, r.data); });
  r.stage_ms[3] = ms(t);
  r.stage_ms[4] = r.stage_ms[0] + r.stage_ms[1] + r.stage_ms[2] + r.stage_ms[3];
  return r;
}

}  // namespace detail

inline PipelineResult build_pipeline(const PipelineConfig& config, const Scenario& scenario) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  run_stage("config", [&] { validate_pipeline_config(config); });
  PipelineResult r;
  r.config = config;
  r.scene = build_scene_config(config.scene);
  r.scenario = scenario;
  const SceneSimulator sim = run_stage("simulate", [&] { return SceneSimulator(r.scene, scenario, config.simulation_seed); });
  r.ground_truth = run_stage("simulate", [&] { return sim.ground_truth(); });
  r.data = run_stage("ingest", [&] { return ingest_frames(simulator_source(sim), r.scene, config.ingest); });
  r.stage_ms[0] = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  return detail::finish_pipeline(std::move(r));
}

// The frame file's own scene configuration replaces config.scene.
inline PipelineResult build_pipeline_from_frames(const PipelineConfig& config, const std::string& frames_path) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  run_stage("config", [&] { validate_pipeline_config(config); });
  PipelineResult r;
  r.config = config;
  r.frames_path = std::filesystem::absolute(frames_path).string();
  FrameFileReader reader = run_stage("ingest", [&] { return FrameFileReader(frames_path); });
  r.scene = reader.config();
  r.config.scene = params_of(r.scene);
  r.data = run_stage("ingest", [&] { return ingest_frames([&] { return reader.next(); }, r.scene, config.ingest); });
  r.stage_ms[0] = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  return detail::finish_pipeline(std::move(r));
}

inline Catalog make_catalog(const PipelineResult& r) {
  Catalog c;
  c.scene_id = r.config.scene_id;
  c.scene = r.scene;
  for (auto s : kAllSpaces)
    if (r.secondary[space_index(s)]) {
      c.models[space_index(s)] = std::make_shared<const TopicModel>(*r.secondary[space_index(s)]);
      c.model_paths[space_index(s)] = model_file(s, ModelStage::Secondary);
    }
  c.sections = r.index.sections;
  c.scenario = r.scenario;
  c.simulation_seed = r.config.simulation_seed;
  c.frames_path = r.frames_path;
  c.ingest = r.config.ingest;
  c.fold_in = r.config.fold_in;
  c.support_threshold = r.config.refinery.support_threshold;
  c.stats = pipeline_stats(r);
  return c;
}

// ---- writing ---------------------------------------------------------------

inline void ensure_dirs(const std::filesystem::path& dir) {
  std::error_code ec;
  for (const char* sub : {"", "corpus", "models", "sections"}) {
    std::filesystem::create_directories(dir / sub, ec);
    if (ec) throw FormatError("cannot create " + (dir / sub).string() + ": " + ec.message());
  }
}

inline void write_clip_manifest(const std::filesystem::path& dir, const SceneConfig& scene, const IngestOutput& data) {
  Json clips = Json::array();
  for (const auto& c : data.clips) clips.push_back({c.clip_id, c.frames.begin, c.frames.end});
  write_text_file((dir / "corpus" / "clips.json").string(),
                  Json{{"scene", to_json(scene)}, {"frames_read", data.frames_read}, {"clips", clips}}.dump() + "\n");
}

inline IngestOutput read_ingest_output(const std::filesystem::path& dir, SceneConfig* scene = nullptr) {
  const auto path = (dir / "corpus" / "clips.json").string();
  const Json m = parse_json(read_text_file(path), path);
  if (scene) *scene = scene_from_json(m.at("scene"));
  IngestOutput out;
  out.frames_read = json_get<std::int64_t>(m, "frames_read");
  std::map<std::int64_t, std::size_t> pos;
  for (const auto& c : m.at("clips")) {
    ClipBundle b;
    b.clip_id = c.at(0).get<std::int64_t>();
    b.frames = {c.at(1).get<std::int64_t>(), c.at(2).get<std::int64_t>()};
    pos[b.clip_id] = out.clips.size();
    out.clips.push_back(std::move(b));
  }
  for (auto s : kAllSpaces) {
    const auto file = dir / "corpus" / (std::string(to_string(s)) + ".jsonl");
    if (!std::filesystem::exists(file)) continue;
    for (auto& d : read_corpus(file.string())) {
      auto it = pos.find(d.clip_id);
      if (it == pos.end()) throw FormatError(file.string() + ": clip " + std::to_string(d.clip_id) + " not in manifest");
      if (d.space != s) throw FormatError(file.string() + ": document in the wrong space");
      out.clips[it->second].docs[space_index(s)] = std::move(d);
    }
  }
  return out;
}

inline void write_models(const std::filesystem::path& dir, const ModelArray& models, ModelStage stage) {
  for (auto s : kAllSpaces) {
    const auto f = dir / model_file(s, stage);
    if (models[space_index(s)]) save_model(*models[space_index(s)], f.string());
    else std::filesystem::remove(f);
  }
}

inline ModelArray read_models(const std::filesystem::path& dir, ModelStage stage) {
  ModelArray out;
  for (auto s : kAllSpaces) {
    const auto f = dir / model_file(s, stage);
    if (!std::filesystem::exists(f)) continue;
    auto m = load_model(f.string());
    if (m.space != s || m.stage != stage) throw FormatError(f.string() + " holds the wrong kind of model");
    out[space_index(s)] = std::move(m);
  }
  return out;
}

inline void write_index(const std::filesystem::path& dir, const Catalog& catalog, const IndexOutput& index,
                        const std::string& scenario_file, const std::string& frames_file, const Json& stats) {
  for (const auto& s : index.sections) save_database(s.db, (dir / s.path).string());
  write_text_file((dir / "catalog.json").string(), catalog_json(catalog, scenario_file, frames_file).dump(2) + "\n");
  write_text_file((dir / "stats.json").string(), stats.dump(2) + "\n");
}

inline void write_pipeline(const PipelineResult& r, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const fs::path dir = out_dir;
  ensure_dirs(dir);
  write_text_file((dir / "config.json").string(), to_json(r.config).dump(2) + "\n");
  std::string scenario_file, frames_file;
  if (r.scenario) {
    scenario_file = "scenario.json";
    write_text_file((dir / scenario_file).string(), to_json(*r.scenario).dump() + "\n");
    write_text_file((dir / "ground_truth.json").string(), to_json(r.ground_truth).dump() + "\n");
    if (r.config.write_frames) {
      frames_file = "frames.jsonl";
      SceneSimulator sim(r.scene, *r.scenario, r.config.simulation_seed);
      FrameFileWriter w((dir / frames_file).string(), r.scene);
      for (std::int64_t t = 0; t < sim.total_frames(); ++t) w.write(sim.frame(t));
    }
  } else {
    frames_file = r.frames_path;
  }
  write_clip_manifest(dir, r.scene, r.data);
  for (auto s : kAllSpaces) write_corpus((dir / "corpus" / (std::string(to_string(s)) + ".jsonl")).string(), r.data.corpus(s));
  write_models(dir, r.primary, ModelStage::Primary);
  write_models(dir, r.secondary, ModelStage::Secondary);
  write_index(dir, make_catalog(r), r.index, scenario_file, frames_file, pipeline_stats(r));
}

inline PipelineResult run_pipeline(const PipelineConfig& config, const Scenario& scenario, const std::string& out_dir) {
  auto r = build_pipeline(config, scenario);
  run_stage("write", [&] { write_pipeline(r, out_dir); });
  return r;
}

inline PipelineResult run_pipeline_from_frames(const PipelineConfig& config, const std::string& frames_path,
                                               const std::string& out_dir) {
  auto r = build_pipeline_from_frames(config, frames_path);
  run_stage("write", [&] { write_pipeline(r, out_dir); });
  return r;
}

}  // namespace vidtopic
