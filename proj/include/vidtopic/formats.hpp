#pragma once

// JSON encodings of the interchange files: scene/frame streams, scenarios,
// ground truth, clip corpora and topic models. Field names are part of the
// file formats documented in docs/formats.md.

#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "vidtopic/error.hpp"
#include "vidtopic/ingest.hpp"
#include "vidtopic/lda.hpp"
#include "vidtopic/scene.hpp"

namespace vidtopic {

using Json = nlohmann::json;

// 64-bit FNV-1a, used for model fingerprints and database checksums.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw FormatError("short write to " + path);
}

template <class T>
T json_get(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("field '") + key + "': " + e.what());
  }
}

template <class T>
T json_get_or(const Json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("field '") + key + "': " + e.what());
  }
}

inline Json parse_json(std::string_view text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw FormatError(what + ": " + e.what());
  }
}

// ---- scene ---------------------------------------------------------------

inline Json to_json(const SceneConfig& c) {
  return Json{{"frame_width_px", c.frame_width_px},
              {"frame_height_px", c.frame_height_px},
              {"cell_size_px", c.cell_size_px},
              {"frames_per_clip", c.frames_per_clip},
              {"fps", Json::array({c.fps.num, c.fps.den})},
              {"flow_threshold", c.flow_threshold},
              {"size_threshold_cells", c.size_threshold_cells},
              {"grid_w", c.grid_w},
              {"grid_h", c.grid_h}};
}

// Grid dimensions are re-derived and checked against any stored values.
inline SceneConfig scene_from_json(const Json& j) {
  SceneParams p;
  p.frame_width_px = json_get<int>(j, "frame_width_px");
  p.frame_height_px = json_get<int>(j, "frame_height_px");
  p.cell_size_px = json_get<int>(j, "cell_size_px");
  p.frames_per_clip = json_get<int>(j, "frames_per_clip");
  if (auto it = j.find("fps"); it != j.end()) {
    if (it->is_array() && it->size() == 2)
      p.fps = Rational{(*it)[0].get<std::int64_t>(), (*it)[1].get<std::int64_t>()};
    else if (it->is_number_integer())
      p.fps = Rational{it->get<std::int64_t>(), 1};
    else
      throw FormatError("fps must be an integer or [num, den]");
  }
  p.flow_threshold = json_get_or<double>(j, "flow_threshold", p.flow_threshold);
  p.size_threshold_cells = json_get_or<int>(j, "size_threshold_cells", p.size_threshold_cells);
  SceneConfig c = build_scene_config(p);
  if (j.contains("grid_w") && json_get<int>(j, "grid_w") != c.grid_w) throw FormatError("grid_w disagrees with frame size");
  if (j.contains("grid_h") && json_get<int>(j, "grid_h") != c.grid_h) throw FormatError("grid_h disagrees with frame size");
  return c;
}

// Sparse frame form: only cells that differ from the default record are
// listed, each with its row-major index "i".
inline Json to_json(const CellMeasurementFrame& f) {
  Json cells = Json::array();
  for (std::size_t i = 0; i < f.cells.size(); ++i) {
    const auto& r = f.cells[i];
    if (r.flow_x == 0.0f && r.flow_y == 0.0f && !r.foreground && !r.blob_id && !r.blob_size_cells) continue;
    Json c{{"i", i}, {"f", Json::array({r.flow_x, r.flow_y})}, {"fg", r.foreground}};
    if (r.blob_id) c["bid"] = *r.blob_id;
    if (r.blob_size_cells) c["bsz"] = *r.blob_size_cells;
    cells.push_back(std::move(c));
  }
  return Json{{"frame", f.frame_index}, {"n", f.cells.size()}, {"cells", std::move(cells)}};
}

inline CellMeasurementFrame frame_from_json(const Json& j) {
  CellMeasurementFrame f;
  f.frame_index = json_get<std::int64_t>(j, "frame");
  const auto n = json_get<std::int64_t>(j, "n");
  if (n < 0) throw FormatError("frame cell count must be >= 0");
  f.cells.assign(static_cast<std::size_t>(n), CellRecord{});
  for (const auto& c : j.at("cells")) {
    const auto i = json_get<std::int64_t>(c, "i");
    if (i < 0 || i >= n) throw FormatError("cell index " + std::to_string(i) + " out of range");
    CellRecord& r = f.cells[static_cast<std::size_t>(i)];
    const auto& fv = c.at("f");
    if (!fv.is_array() || fv.size() != 2) throw FormatError("cell flow must be [fx, fy]");
    r.flow_x = fv[0].get<float>();
    r.flow_y = fv[1].get<float>();
    r.foreground = json_get<bool>(c, "fg");
    if (auto it = c.find("bid"); it != c.end() && !it->is_null()) r.blob_id = it->get<std::int32_t>();
    if (auto it = c.find("bsz"); it != c.end() && !it->is_null()) r.blob_size_cells = it->get<std::int32_t>();
  }
  return f;
}

// Newline-delimited frame file: a header line {"scene": {...}} followed by
// one frame object per line.
class FrameFileWriter {
 public:
  FrameFileWriter(const std::string& path, const SceneConfig& cfg) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw FormatError("cannot write " + path);
    out_ << Json{{"scene", to_json(cfg)}}.dump() << '\n';
  }
  void write(const CellMeasurementFrame& f) { out_ << to_json(f).dump() << '\n'; }

 private:
  std::ofstream out_;
};

class FrameFileReader {
 public:
  explicit FrameFileReader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw FormatError("cannot open " + path);
    std::string line;
    if (!std::getline(in_, line)) throw FormatError(path + ": missing header line");
    const Json header = parse_json(line, path + " header");
    if (!header.contains("scene")) throw FormatError(path + ": header lacks 'scene'");
    config_ = scene_from_json(header.at("scene"));
  }
  const SceneConfig& config() const { return config_; }

  std::optional<CellMeasurementFrame> next() {
    std::string line;
    while (std::getline(in_, line)) {
      if (line.empty()) continue;
      try {
        auto f = frame_from_json(parse_json(line, "frame line"));
        validate_frame(f, config_);
        return f;
      } catch (const Json::exception& e) {
        throw FormatError(std::string("frame line: ") + e.what());
      }
    }
    return std::nullopt;
  }

 private:
  std::ifstream in_;
  SceneConfig config_;
};

inline Json to_json(const Scenario& s) {
  Json agents = Json::array();
  for (const auto& a : s.agents) {
    Json path = Json::array();
    for (const auto& p : a.path) path.push_back(Json::array({p.x, p.y}));
    Json stops = Json::array();
    for (const auto& st : a.stop_events)
      stops.push_back(Json{{"cell", Json::array({st.cell.x, st.cell.y})},
                           {"start_frame", st.start_frame},
                           {"duration_frames", st.duration_frames}});
    Json aj{{"path", std::move(path)},
            {"speed", a.speed},
            {"size_cells", a.size_cells},
            {"start_frame", a.start_frame},
            {"stop_events", std::move(stops)}};
    if (!a.label.empty()) aj["label"] = a.label;
    agents.push_back(std::move(aj));
  }
  return Json{{"total_frames", s.total_frames}, {"noise_rate", s.noise_rate}, {"agents", std::move(agents)}};
}

inline Scenario scenario_from_json(const Json& j) {
  Scenario s;
  try {
    s.total_frames = json_get<std::int64_t>(j, "total_frames");
    s.noise_rate = json_get_or<double>(j, "noise_rate", 0.0);
    for (const auto& aj : j.at("agents")) {
      Agent a;
      for (const auto& p : aj.at("path")) a.path.push_back(Point{p.at(0).get<double>(), p.at(1).get<double>()});
      a.speed = json_get<double>(aj, "speed");
      a.size_cells = json_get<int>(aj, "size_cells");
      a.start_frame = json_get_or<std::int64_t>(aj, "start_frame", 0);
      a.label = json_get_or<std::string>(aj, "label", "");
      if (auto it = aj.find("stop_events"); it != aj.end())
        for (const auto& st : *it)
          a.stop_events.push_back(StopEvent{Cell{st.at("cell").at(0).get<int>(), st.at("cell").at(1).get<int>()},
                                            json_get<std::int64_t>(st, "start_frame"),
                                            json_get<std::int64_t>(st, "duration_frames")});
      s.agents.push_back(std::move(a));
    }
  } catch (const Json::exception& e) {
    throw FormatError(std::string("scenario: ") + e.what());
  }
  return s;
}

inline Json to_json(const GroundTruthLog& log) {
  Json events = Json::array();
  for (const auto& e : log.events) {
    Json cells = Json::array();
    for (const auto& c : e.cells) cells.push_back(Json::array({c.x, c.y}));
    events.push_back(Json{{"kind", to_string(e.kind)},
                          {"frames", Json::array({e.frames.begin, e.frames.end})},
                          {"agents", e.agents},
                          {"label", e.label},
                          {"cells", std::move(cells)}});
  }
  return Json{{"events", std::move(events)}};
}

inline GroundTruthLog ground_truth_from_json(const Json& j) {
  GroundTruthLog log;
  try {
    for (const auto& ej : j.at("events")) {
      GroundTruthEvent e;
      const auto kind = ej.at("kind").get<std::string>();
      if (kind == "motion-traverse") e.kind = EventKind::MotionTraverse;
      else if (kind == "persistence") e.kind = EventKind::Persistence;
      else if (kind == "co-occurrence") e.kind = EventKind::CoOccurrence;
      else throw FormatError("unknown event kind '" + kind + "'");
      e.frames = {ej.at("frames").at(0).get<std::int64_t>(), ej.at("frames").at(1).get<std::int64_t>()};
      e.agents = ej.at("agents").get<std::vector<int>>();
      e.label = json_get_or<std::string>(ej, "label", "");
      for (const auto& c : ej.at("cells")) e.cells.push_back(Cell{c.at(0).get<int>(), c.at(1).get<int>()});
      log.events.push_back(std::move(e));
    }
  } catch (const Json::exception& e) {
    throw FormatError(std::string("ground truth: ") + e.what());
  }
  return log;
}

// ---- corpus ----------------------------------------------------------------

inline Json to_json(const ClipDocument& d) {
  Json words = Json::array();
  for (const auto& w : d.words) words.push_back(Json::array({w.word, w.count}));
  Json j{{"clip", d.clip_id},
         {"space", to_string(d.space)},
         {"interval", Json::array({d.frames.begin, d.frames.end})},
         {"words", std::move(words)}};
  j["blob"] = d.blob_tag ? Json(*d.blob_tag) : Json(nullptr);
  return j;
}

inline ClipDocument document_from_json(const Json& j) {
  ClipDocument d;
  try {
    d.clip_id = json_get<std::int64_t>(j, "clip");
    const auto space = parse_space(json_get<std::string>(j, "space"));
    if (!space) throw FormatError("unknown feature space '" + j.at("space").get<std::string>() + "'");
    d.space = *space;
    d.frames = {j.at("interval").at(0).get<std::int64_t>(), j.at("interval").at(1).get<std::int64_t>()};
    for (const auto& w : j.at("words")) d.words.push_back({w.at(0).get<std::int32_t>(), w.at(1).get<std::int32_t>()});
    if (auto it = j.find("blob"); it != j.end() && !it->is_null()) d.blob_tag = it->get<int>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("corpus line: ") + e.what());
  }
  return d;
}

inline void write_corpus(const std::string& path, std::span<const ClipDocument> docs) {
  std::string text;
  for (const auto& d : docs) {
    text += to_json(d).dump();
    text += '\n';
  }
  write_text_file(path, text);
}

inline std::vector<ClipDocument> read_corpus(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<ClipDocument> docs;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) docs.push_back(document_from_json(parse_json(line, path)));
  return docs;
}

// ---- topic models --------------------------------------------------------

inline Json to_json(const TopicModel& m) {
  Json topics = Json::array();
  for (const auto& t : m.topics) {
    Json words = Json::array();
    for (const auto& w : t.words) words.push_back(Json::array({w.word, w.prob}));
    Json tj{{"id", t.id}, {"mass", t.mass_hint}, {"words", std::move(words)}};
    tj["direction"] = t.direction ? Json(to_string(*t.direction)) : Json(nullptr);
    tj["source"] = t.source_topic ? Json(*t.source_topic) : Json(nullptr);
    topics.push_back(std::move(tj));
  }
  Json remap = Json::array();
  for (const auto& r : m.remap) remap.push_back(Json::array({r.old_id, r.new_id}));
  return Json{{"format", "vidtopic-model"},
              {"version", 1},
              {"space", to_string(m.space)},
              {"stage", to_string(m.stage)},
              {"K", m.num_topics()},
              {"vocabulary_size", m.vocabulary_size},
              {"grid", Json::array({m.grid_w, m.grid_h})},
              {"alpha", m.alpha},
              {"beta", m.beta},
              {"seed", m.seed},
              {"iterations", m.iterations},
              {"topics", std::move(topics)},
              {"remap", std::move(remap)},
              {"dropped", m.dropped_topics}};
}

inline TopicModel model_from_json(const Json& j) {
  TopicModel m;
  try {
    if (json_get_or<std::string>(j, "format", "") != "vidtopic-model") throw FormatError("not a topic model file");
    const auto space = parse_space(json_get<std::string>(j, "space"));
    if (!space) throw FormatError("unknown feature space");
    m.space = *space;
    const auto stage = json_get<std::string>(j, "stage");
    if (stage == "primary") m.stage = ModelStage::Primary;
    else if (stage == "secondary") m.stage = ModelStage::Secondary;
    else throw FormatError("unknown stage '" + stage + "'");
    m.vocabulary_size = json_get<int>(j, "vocabulary_size");
    m.grid_w = j.at("grid").at(0).get<int>();
    m.grid_h = j.at("grid").at(1).get<int>();
    m.alpha = json_get<double>(j, "alpha");
    m.beta = json_get<double>(j, "beta");
    m.seed = json_get<std::uint64_t>(j, "seed");
    m.iterations = json_get<int>(j, "iterations");
    for (const auto& tj : j.at("topics")) {
      Topic t;
      t.id = json_get<int>(tj, "id");
      t.space = m.space;
      t.mass_hint = json_get<double>(tj, "mass");
      for (const auto& w : tj.at("words")) t.words.push_back({w.at(0).get<std::int32_t>(), w.at(1).get<double>()});
      if (auto it = tj.find("direction"); it != tj.end() && !it->is_null()) {
        t.direction = parse_direction(it->get<std::string>());
        if (!t.direction) throw FormatError("unknown direction");
      }
      if (auto it = tj.find("source"); it != tj.end() && !it->is_null()) t.source_topic = it->get<int>();
      if (t.id != static_cast<int>(m.topics.size())) throw FormatError("topic ids must be 0..K-1 in order");
      m.topics.push_back(std::move(t));
    }
    if (json_get<int>(j, "K") != m.num_topics()) throw FormatError("K disagrees with topic list");
    if (auto it = j.find("remap"); it != j.end())
      for (const auto& r : *it) m.remap.push_back({r.at(0).get<int>(), r.at(1).get<int>()});
    m.dropped_topics = json_get_or<std::vector<int>>(j, "dropped", {});
  } catch (const Json::exception& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
  return m;
}

inline std::string model_text(const TopicModel& m) { return to_json(m).dump(); }

inline std::string model_hash(const TopicModel& m) { return hex64(fnv1a(model_text(m))); }

inline void save_model(const TopicModel& m, const std::string& path) { write_text_file(path, model_text(m) + "\n"); }

inline TopicModel load_model(const std::string& path) {
  return model_from_json(parse_json(read_text_file(path), path));
}

}  // namespace vidtopic
