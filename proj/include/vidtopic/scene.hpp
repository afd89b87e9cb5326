#pragma once

// Scene geometry, per-cell measurement frames and the synthetic traffic
// simulator that produces them.
//
// Coordinates are cell coordinates (x = column, y = row) with y growing
// downward, matching image convention. Flow vectors are in pixels per frame
// in the same frame of reference.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "vidtopic/error.hpp"
#include "vidtopic/rng.hpp"

namespace vidtopic {

struct Cell {
  int x = 0;
  int y = 0;
  friend constexpr bool operator==(const Cell&, const Cell&) = default;
  friend constexpr auto operator<=>(const Cell& a, const Cell& b) {
    if (auto c = a.y <=> b.y; c != 0) return c;
    return a.x <=> b.x;
  }
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend constexpr bool operator==(const Point&, const Point&) = default;
};

// Half-open frame interval [begin, end).
struct FrameInterval {
  std::int64_t begin = 0;
  std::int64_t end = 0;
  std::int64_t length() const { return end - begin; }
  bool empty() const { return end <= begin; }
  friend constexpr bool operator==(const FrameInterval&, const FrameInterval&) = default;
};

inline std::int64_t overlap_length(const FrameInterval& a, const FrameInterval& b) {
  return std::max<std::int64_t>(0, std::min(a.end, b.end) - std::max(a.begin, b.begin));
}

struct Rational {
  std::int64_t num = 30;
  std::int64_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend constexpr bool operator==(const Rational&, const Rational&) = default;
};

// User-supplied scene parameters before validation.
struct SceneParams {
  int frame_width_px = 480;
  int frame_height_px = 320;
  int cell_size_px = 10;
  int frames_per_clip = 30;
  Rational fps{30, 1};
  double flow_threshold = 1.0;  // px/frame
  int size_threshold_cells = 6;
};

struct SceneConfig {
  int frame_width_px = 0;
  int frame_height_px = 0;
  int cell_size_px = 0;
  int frames_per_clip = 0;
  Rational fps;
  double flow_threshold = 0.0;
  int size_threshold_cells = 0;
  int grid_w = 0;
  int grid_h = 0;

  int cell_count() const { return grid_w * grid_h; }
  double clip_seconds() const { return frames_per_clip / fps.value(); }
  bool contains(const Cell& c) const { return c.x >= 0 && c.y >= 0 && c.x < grid_w && c.y < grid_h; }
  int index_of(const Cell& c) const { return c.y * grid_w + c.x; }
  Cell cell_at(int index) const { return Cell{index % grid_w, index / grid_w}; }

  friend bool operator==(const SceneConfig&, const SceneConfig&) = default;
};

inline SceneConfig build_scene_config(const SceneParams& p) {
  if (p.cell_size_px < 1) throw ConfigError("cell_size_px must be >= 1");
  if (p.frame_width_px < 1 || p.frame_height_px < 1) throw ConfigError("frame dimensions must be positive");
  if (p.frames_per_clip < 1) throw ConfigError("frames_per_clip must be >= 1");
  if (p.fps.num <= 0 || p.fps.den <= 0) throw ConfigError("fps must be a positive rational");
  if (!(p.flow_threshold >= 0.0)) throw ConfigError("flow_threshold must be >= 0");
  if (p.size_threshold_cells < 1) throw ConfigError("size_threshold_cells must be >= 1");
  if (p.frame_width_px % p.cell_size_px != 0 || p.frame_height_px % p.cell_size_px != 0)
    throw ConfigError("frame dimensions " + std::to_string(p.frame_width_px) + "x" +
                      std::to_string(p.frame_height_px) + " are not divisible by cell size " +
                      std::to_string(p.cell_size_px));
  SceneConfig c;
  c.frame_width_px = p.frame_width_px;
  c.frame_height_px = p.frame_height_px;
  c.cell_size_px = p.cell_size_px;
  c.frames_per_clip = p.frames_per_clip;
  c.fps = p.fps;
  c.flow_threshold = p.flow_threshold;
  c.size_threshold_cells = p.size_threshold_cells;
  c.grid_w = p.frame_width_px / p.cell_size_px;
  c.grid_h = p.frame_height_px / p.cell_size_px;
  return c;
}

inline SceneParams params_of(const SceneConfig& c) {
  return SceneParams{c.frame_width_px, c.frame_height_px, c.cell_size_px, c.frames_per_clip,
                     c.fps,            c.flow_threshold,  c.size_threshold_cells};
}

// Raw measurements for one cell in one frame. blob_id and blob_size_cells
// are present exactly when the cell is foreground.
struct CellRecord {
  float flow_x = 0.0f;
  float flow_y = 0.0f;
  bool foreground = false;
  std::optional<std::int32_t> blob_id;
  std::optional<std::int32_t> blob_size_cells;
  friend bool operator==(const CellRecord&, const CellRecord&) = default;
};

struct CellMeasurementFrame {
  std::int64_t frame_index = 0;
  std::vector<CellRecord> cells;  // row-major, grid_w * grid_h
  friend bool operator==(const CellMeasurementFrame&, const CellMeasurementFrame&) = default;
};

inline void validate_frame(const CellMeasurementFrame& f, const SceneConfig& cfg) {
  if (static_cast<int>(f.cells.size()) != cfg.cell_count())
    throw FormatError("frame " + std::to_string(f.frame_index) + " has " + std::to_string(f.cells.size()) +
                      " cells, expected " + std::to_string(cfg.cell_count()));
  for (const auto& r : f.cells) {
    if (r.foreground != r.blob_id.has_value())
      throw FormatError("frame " + std::to_string(f.frame_index) + ": blob_id must be present iff foreground");
    if (r.blob_size_cells && *r.blob_size_cells < 1)
      throw FormatError("frame " + std::to_string(f.frame_index) + ": blob_size_cells must be >= 1");
  }
}

struct StopEvent {
  Cell cell;
  std::int64_t start_frame = 0;
  std::int64_t duration_frames = 1;
  friend bool operator==(const StopEvent&, const StopEvent&) = default;
};

// A moving or parking object. The agent appears at path[0] on start_frame
// and advances `speed` cells per frame along the polyline; its travel clock
// pauses during stop events, while it is drawn at the stop cell with zero
// flow. It leaves the scene once it has covered the whole path.
struct Agent {
  std::vector<Point> path;
  double speed = 1.0;
  int size_cells = 4;
  std::int64_t start_frame = 0;
  std::vector<StopEvent> stop_events;
  std::string label;
  friend bool operator==(const Agent&, const Agent&) = default;
};

struct Scenario {
  std::vector<Agent> agents;
  std::int64_t total_frames = 0;
  double noise_rate = 0.0;  // per cell per frame
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

enum class EventKind { MotionTraverse, Persistence, CoOccurrence };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::MotionTraverse: return "motion-traverse";
    case EventKind::Persistence: return "persistence";
    case EventKind::CoOccurrence: return "co-occurrence";
  }
  return "?";
}

struct GroundTruthEvent {
  EventKind kind = EventKind::MotionTraverse;
  std::vector<Cell> cells;  // sorted
  FrameInterval frames;
  std::vector<int> agents;  // one id, two for co-occurrence
  std::string label;        // label of the first agent
  friend bool operator==(const GroundTruthEvent&, const GroundTruthEvent&) = default;
};

struct GroundTruthLog {
  std::vector<GroundTruthEvent> events;
  friend bool operator==(const GroundTruthLog&, const GroundTruthLog&) = default;

  std::vector<GroundTruthEvent> select(EventKind kind, const std::string& label = {}) const {
    std::vector<GroundTruthEvent> out;
    for (const auto& e : events)
      if (e.kind == kind && (label.empty() || e.label == label)) out.push_back(e);
    return out;
  }
};

inline int block_side(int size_cells) {
  return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(std::max(1, size_cells))) - 1e-9));
}

inline void validate_scenario(const Scenario& s, const SceneConfig& cfg) {
  if (s.total_frames < 0) throw ConfigError("total_frames must be >= 0");
  if (!(s.noise_rate >= 0.0 && s.noise_rate <= 1.0)) throw ConfigError("noise_rate must lie in [0,1]");
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    const auto& a = s.agents[i];
    const std::string who = "agent " + std::to_string(i);
    if (a.path.empty()) throw ConfigError(who + ": path is empty");
    if (!(a.speed > 0.0)) throw ConfigError(who + ": speed must be > 0");
    if (a.size_cells < 1) throw ConfigError(who + ": size_cells must be >= 1");
    if (a.start_frame < 0) throw ConfigError(who + ": start_frame must be >= 0");
    for (const auto& p : a.path)
      if (!(p.x >= 0.0 && p.y >= 0.0 && p.x <= cfg.grid_w - 1 && p.y <= cfg.grid_h - 1))
        throw ConfigError(who + ": path point (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                          ") lies outside the grid");
    for (const auto& st : a.stop_events) {
      if (!cfg.contains(st.cell)) throw ConfigError(who + ": stop cell lies outside the grid");
      if (st.duration_frames < 1) throw ConfigError(who + ": stop duration must be >= 1");
      if (st.start_frame < a.start_frame) throw ConfigError(who + ": stop starts before the agent");
    }
  }
}

namespace detail {

inline double polyline_length(const std::vector<Point>& path) {
  double len = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) len += std::hypot(path[i].x - path[i - 1].x, path[i].y - path[i - 1].y);
  return len;
}

}  // namespace detail

// Where an agent is and how it moves in one frame.
struct AgentState {
  Point position;
  Point velocity;  // cells/frame
  bool stopped = false;
};

// Random-access frame generator. Frames are pure functions of
// (config, scenario, seed, frame index).
class SceneSimulator {
 public:
  SceneSimulator(SceneConfig config, Scenario scenario, std::uint64_t seed)
      : config_(std::move(config)), scenario_(std::move(scenario)), seed_(seed) {
    validate_scenario(scenario_, config_);
    for (auto& a : scenario_.agents)
      std::sort(a.stop_events.begin(), a.stop_events.end(),
                [](const StopEvent& l, const StopEvent& r) { return l.start_frame < r.start_frame; });
    lengths_.reserve(scenario_.agents.size());
    for (const auto& a : scenario_.agents) lengths_.push_back(detail::polyline_length(a.path));
  }

  const SceneConfig& config() const { return config_; }
  const Scenario& scenario() const { return scenario_; }
  std::int64_t total_frames() const { return scenario_.total_frames; }

  std::optional<AgentState> agent_state(std::size_t agent, std::int64_t t) const {
    const Agent& a = scenario_.agents[agent];
    if (t < a.start_frame) return std::nullopt;
    std::int64_t paused = 0;
    for (const auto& st : a.stop_events) {
      const std::int64_t end = st.start_frame + st.duration_frames;
      if (t >= st.start_frame && t < end)
        return AgentState{Point{static_cast<double>(st.cell.x), static_cast<double>(st.cell.y)}, {}, true};
      if (end <= t) paused += st.duration_frames;
    }
    const double travelled = static_cast<double>(t - a.start_frame - paused) * a.speed;
    if (travelled >= lengths_[agent]) return std::nullopt;
    double remaining = travelled;
    for (std::size_t i = 1; i < a.path.size(); ++i) {
      const Point& p0 = a.path[i - 1];
      const Point& p1 = a.path[i];
      const double seg = std::hypot(p1.x - p0.x, p1.y - p0.y);
      if (seg <= 0.0) continue;
      if (remaining < seg) {
        const double u = remaining / seg;
        const Point dir{(p1.x - p0.x) / seg, (p1.y - p0.y) / seg};
        return AgentState{Point{p0.x + u * (p1.x - p0.x), p0.y + u * (p1.y - p0.y)},
                          Point{dir.x * a.speed, dir.y * a.speed}, false};
      }
      remaining -= seg;
    }
    return std::nullopt;
  }

  // Cells covered by an agent drawn at `pos`.
  std::vector<Cell> footprint(std::size_t agent, const Point& pos) const {
    const int side = block_side(scenario_.agents[agent].size_cells);
    const int ax = static_cast<int>(std::floor(pos.x + 0.5));
    const int ay = static_cast<int>(std::floor(pos.y + 0.5));
    std::vector<Cell> out;
    for (int dy = 0; dy < side; ++dy)
      for (int dx = 0; dx < side; ++dx) {
        Cell c{ax + dx, ay + dy};
        if (config_.contains(c)) out.push_back(c);
      }
    return out;
  }

  CellMeasurementFrame frame(std::int64_t t) const {
    CellMeasurementFrame f;
    f.frame_index = t;
    f.cells.resize(static_cast<std::size_t>(config_.cell_count()));
    if (scenario_.noise_rate > 0.0) {
      Rng rng(mix_seed(seed_, static_cast<std::uint64_t>(t), 0x6e6f697365ULL));
      const std::int32_t base_id = static_cast<std::int32_t>(scenario_.agents.size());
      for (int i = 0; i < config_.cell_count(); ++i) {
        if (rng.uniform() >= scenario_.noise_rate) continue;
        const double angle = rng.uniform() * 2.0 * M_PI;
        const double mag = rng.uniform() * 3.0 * std::max(config_.flow_threshold, 1.0);
        auto& r = f.cells[static_cast<std::size_t>(i)];
        r.flow_x = static_cast<float>(mag * std::cos(angle));
        r.flow_y = static_cast<float>(mag * std::sin(angle));
        r.foreground = true;
        r.blob_id = base_id + i;
        r.blob_size_cells = 1;
      }
    }
    for (std::size_t a = 0; a < scenario_.agents.size(); ++a) {
      const auto state = agent_state(a, t);
      if (!state) continue;
      const float fx = static_cast<float>(state->velocity.x * config_.cell_size_px);
      const float fy = static_cast<float>(state->velocity.y * config_.cell_size_px);
      for (const Cell& c : footprint(a, state->position)) {
        auto& r = f.cells[static_cast<std::size_t>(config_.index_of(c))];
        r.flow_x = fx;
        r.flow_y = fy;
        r.foreground = true;
        r.blob_id = static_cast<std::int32_t>(a);
        r.blob_size_cells = scenario_.agents[a].size_cells;
      }
    }
    return f;
  }

  GroundTruthLog ground_truth() const {
    GroundTruthLog log;
    const std::int64_t total = scenario_.total_frames;
    for (std::size_t a = 0; a < scenario_.agents.size(); ++a) {
      const Agent& agent = scenario_.agents[a];
      if (lengths_[a] <= 0.0) continue;
      std::vector<Cell> cells;
      std::int64_t first = -1, last = -1;
      for (std::int64_t t = agent.start_frame; t < total; ++t) {
        const auto st = agent_state(a, t);
        if (!st) {
          if (first >= 0 && t > last_stop_end(a)) break;
          continue;
        }
        if (first < 0) first = t;
        last = t;
        if (!st->stopped) {
          auto fp = footprint(a, st->position);
          cells.insert(cells.end(), fp.begin(), fp.end());
        }
      }
      if (first < 0 || cells.empty()) continue;
      std::sort(cells.begin(), cells.end());
      cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
      log.events.push_back({EventKind::MotionTraverse, std::move(cells), {first, last + 1}, {static_cast<int>(a)},
                            agent.label});
    }
    std::vector<GroundTruthEvent> stops;
    for (std::size_t a = 0; a < scenario_.agents.size(); ++a) {
      for (const auto& st : scenario_.agents[a].stop_events) {
        FrameInterval iv{std::max<std::int64_t>(0, st.start_frame),
                         std::min(total, st.start_frame + st.duration_frames)};
        if (iv.empty()) continue;
        auto cells = footprint(a, Point{static_cast<double>(st.cell.x), static_cast<double>(st.cell.y)});
        std::sort(cells.begin(), cells.end());
        stops.push_back({EventKind::Persistence, std::move(cells), iv, {static_cast<int>(a)},
                         scenario_.agents[a].label});
      }
    }
    for (std::size_t i = 0; i < stops.size(); ++i)
      for (std::size_t j = i + 1; j < stops.size(); ++j) {
        if (stops[i].agents[0] == stops[j].agents[0]) continue;
        FrameInterval iv{std::max(stops[i].frames.begin, stops[j].frames.begin),
                         std::min(stops[i].frames.end, stops[j].frames.end)};
        if (iv.empty()) continue;
        std::vector<Cell> cells = stops[i].cells;
        cells.insert(cells.end(), stops[j].cells.begin(), stops[j].cells.end());
        std::sort(cells.begin(), cells.end());
        cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
        log.events.push_back({EventKind::CoOccurrence, std::move(cells), iv,
                              {stops[i].agents[0], stops[j].agents[0]}, stops[i].label});
      }
    log.events.insert(log.events.end(), stops.begin(), stops.end());
    std::stable_sort(log.events.begin(), log.events.end(), [](const auto& l, const auto& r) {
      if (l.kind != r.kind) return l.kind < r.kind;
      return l.frames.begin < r.frames.begin;
    });
    return log;
  }

 private:
  std::int64_t last_stop_end(std::size_t a) const {
    std::int64_t end = -1;
    for (const auto& st : scenario_.agents[a].stop_events) end = std::max(end, st.start_frame + st.duration_frames);
    return end;
  }

  SceneConfig config_;
  Scenario scenario_;
  std::uint64_t seed_;
  std::vector<double> lengths_;
};

struct SimulationOutput {
  std::vector<CellMeasurementFrame> frames;
  GroundTruthLog ground_truth;
};

inline SimulationOutput simulate_scene(const SceneConfig& config, const Scenario& scenario, std::uint64_t seed) {
  SceneSimulator sim(config, scenario, seed);
  SimulationOutput out;
  out.frames.reserve(static_cast<std::size_t>(scenario.total_frames));
  for (std::int64_t t = 0; t < scenario.total_frames; ++t) out.frames.push_back(sim.frame(t));
  out.ground_truth = sim.ground_truth();
  return out;
}

}  // namespace vidtopic
