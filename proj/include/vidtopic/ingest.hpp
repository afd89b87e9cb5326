#pragma once

// Clip segmentation, visual-word quantization and clip blob decomposition.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vidtopic/error.hpp"
#include "vidtopic/scene.hpp"

namespace vidtopic {

enum class FeatureSpace : std::uint8_t { Motion = 0, Persistence = 1, Size = 2 };

inline constexpr std::array<FeatureSpace, 3> kAllSpaces{FeatureSpace::Motion, FeatureSpace::Persistence,
                                                        FeatureSpace::Size};

inline constexpr std::size_t space_index(FeatureSpace s) { return static_cast<std::size_t>(s); }

inline const char* to_string(FeatureSpace s) {
  switch (s) {
    case FeatureSpace::Motion: return "motion";
    case FeatureSpace::Persistence: return "persistence";
    case FeatureSpace::Size: return "size";
  }
  return "?";
}

inline char space_prefix(FeatureSpace s) { return "mps"[space_index(s)]; }

inline std::optional<FeatureSpace> parse_space(std::string_view name) {
  std::string lower(name);
  for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (lower == "motion" || lower == "m") return FeatureSpace::Motion;
  if (lower == "persistence" || lower == "p") return FeatureSpace::Persistence;
  if (lower == "size" || lower == "s") return FeatureSpace::Size;
  return std::nullopt;
}

// Feature values per cell in each space.
inline constexpr int values_per_cell(FeatureSpace s) {
  switch (s) {
    case FeatureSpace::Motion: return 8;
    case FeatureSpace::Persistence: return 1;
    case FeatureSpace::Size: return 2;
  }
  return 1;
}

inline int vocabulary_size(FeatureSpace s, const SceneConfig& cfg) { return cfg.cell_count() * values_per_cell(s); }

// Eight compass directions, counter-clockwise from east as seen on screen.
enum class Direction : std::uint8_t { E = 0, NE, N, NW, W, SW, S, SE };

inline const char* to_string(Direction d) {
  static constexpr const char* names[] = {"E", "NE", "N", "NW", "W", "SW", "S", "SE"};
  return names[static_cast<int>(d)];
}

inline std::optional<Direction> parse_direction(std::string_view s) {
  static constexpr std::string_view names[] = {"E", "NE", "N", "NW", "W", "SW", "S", "SE"};
  for (int i = 0; i < 8; ++i)
    if (names[i] == s) return static_cast<Direction>(i);
  return std::nullopt;
}

enum class SizeLabel : std::uint8_t { Small = 0, Large = 1 };

// Bin an angle in degrees (any range) into one of eight 45 degree sectors
// centred on the compass directions.
inline Direction direction_from_angle(double degrees) {
  double a = std::fmod(degrees + 22.5, 360.0);
  if (a < 0.0) a += 360.0;
  int bin = static_cast<int>(std::floor(a / 45.0));
  return static_cast<Direction>(bin % 8);
}

// Flow in image coordinates; nullopt means static. The zero vector is static
// for every threshold.
inline std::optional<Direction> quantize_direction(double fx, double fy, double flow_threshold) {
  const double mag = std::hypot(fx, fy);
  if (mag < flow_threshold || mag == 0.0) return std::nullopt;
  const double deg = std::atan2(-fy, fx) * 180.0 / M_PI;
  return direction_from_angle(deg);
}

// A decoded visual word: the cell it lives at and its feature value
// (direction index, 0 for persistence, size label index).
struct VisualWord {
  int cell_index = 0;
  int value = 0;
  friend constexpr bool operator==(const VisualWord&, const VisualWord&) = default;
};

inline int encode_word(FeatureSpace s, VisualWord w) { return w.cell_index * values_per_cell(s) + w.value; }
inline VisualWord decode_word(FeatureSpace s, int word_id) {
  const int v = values_per_cell(s);
  return VisualWord{word_id / v, word_id % v};
}

struct WordCount {
  std::int32_t word = 0;
  std::int32_t count = 0;
  friend constexpr bool operator==(const WordCount&, const WordCount&) = default;
};

// Bag of visual words for one clip in one feature space. Words are sorted
// and unique.
struct ClipDocument {
  std::int64_t clip_id = 0;
  FrameInterval frames;
  FeatureSpace space = FeatureSpace::Motion;
  std::vector<WordCount> words;
  std::optional<int> blob_tag;

  std::int64_t length() const {
    std::int64_t n = 0;
    for (const auto& w : words) n += w.count;
    return n;
  }
  bool empty() const { return words.empty(); }
  friend bool operator==(const ClipDocument&, const ClipDocument&) = default;
};

inline void validate_document(const ClipDocument& d, const SceneConfig& cfg) {
  const int vocab = vocabulary_size(d.space, cfg);
  for (std::size_t i = 0; i < d.words.size(); ++i) {
    const auto& w = d.words[i];
    if (w.word < 0 || w.word >= vocab)
      throw FormatError("clip " + std::to_string(d.clip_id) + ": word " + std::to_string(w.word) +
                        " outside vocabulary of size " + std::to_string(vocab));
    if (w.count <= 0) throw FormatError("clip " + std::to_string(d.clip_id) + ": word counts must be positive");
    if (i > 0 && d.words[i - 1].word >= w.word)
      throw FormatError("clip " + std::to_string(d.clip_id) + ": words must be sorted and unique");
  }
}

struct IngestParams {
  double persistence_fraction = 0.8;
  int connectivity = 4;
  friend bool operator==(const IngestParams&, const IngestParams&) = default;
};

inline void validate_ingest_params(const IngestParams& p) {
  if (!(p.persistence_fraction > 0.0 && p.persistence_fraction <= 1.0))
    throw ConfigError("persistence_fraction must lie in (0,1]");
  if (p.connectivity != 4 && p.connectivity != 8) throw ConfigError("connectivity must be 4 or 8");
}

// Consecutive disjoint clips of exactly F frames; a trailing remainder shorter
// than F is dropped.
inline std::vector<FrameInterval> segment_clips(std::int64_t frame_count, const SceneConfig& cfg) {
  if (cfg.frames_per_clip < 1) throw ConfigError("frames_per_clip must be >= 1");
  std::vector<FrameInterval> out;
  for (std::int64_t b = 0; b + cfg.frames_per_clip <= frame_count; b += cfg.frames_per_clip)
    out.push_back({b, b + cfg.frames_per_clip});
  return out;
}

// Documents for the three feature spaces of one clip, indexed by space_index.
using ClipDocuments = std::array<ClipDocument, 3>;

inline ClipDocuments extract_clip_documents(std::span<const CellMeasurementFrame> clip, const SceneConfig& cfg,
                                            const IngestParams& params = {}) {
  validate_ingest_params(params);
  if (static_cast<int>(clip.size()) != cfg.frames_per_clip)
    throw ConfigError("clip has " + std::to_string(clip.size()) + " frames, expected " +
                      std::to_string(cfg.frames_per_clip));
  const int n = cfg.cell_count();
  std::vector<std::array<int, 8>> dir_votes(static_cast<std::size_t>(n), std::array<int, 8>{});
  std::vector<int> persistent(static_cast<std::size_t>(n), 0);
  std::vector<std::array<int, 2>> size_votes(static_cast<std::size_t>(n), std::array<int, 2>{});
  for (const auto& f : clip) {
    validate_frame(f, cfg);
    for (int i = 0; i < n; ++i) {
      const auto& r = f.cells[static_cast<std::size_t>(i)];
      if (!r.foreground) continue;
      const auto dir = quantize_direction(r.flow_x, r.flow_y, cfg.flow_threshold);
      if (dir)
        ++dir_votes[static_cast<std::size_t>(i)][static_cast<int>(*dir)];
      else
        ++persistent[static_cast<std::size_t>(i)];
      const int bsz = r.blob_size_cells.value_or(1);
      ++size_votes[static_cast<std::size_t>(i)][bsz >= cfg.size_threshold_cells ? 1 : 0];
    }
  }

  const FrameInterval frames{clip.front().frame_index, clip.front().frame_index + cfg.frames_per_clip};
  const std::int64_t clip_id = frames.begin / cfg.frames_per_clip;
  ClipDocuments docs;
  for (auto s : kAllSpaces) {
    docs[space_index(s)].clip_id = clip_id;
    docs[space_index(s)].frames = frames;
    docs[space_index(s)].space = s;
  }
  const double persist_needed = params.persistence_fraction * cfg.frames_per_clip;
  for (int i = 0; i < n; ++i) {
    const auto& dv = dir_votes[static_cast<std::size_t>(i)];
    // Earliest maximum wins ties, so the lowest direction index is chosen.
    const auto best = std::max_element(dv.begin(), dv.end());
    if (*best > 0)
      docs[0].words.push_back(
          {encode_word(FeatureSpace::Motion, {i, static_cast<int>(best - dv.begin())}), 1});
    if (persistent[static_cast<std::size_t>(i)] >= persist_needed)
      docs[1].words.push_back({encode_word(FeatureSpace::Persistence, {i, 0}), 1});
    const auto& sv = size_votes[static_cast<std::size_t>(i)];
    if (sv[0] + sv[1] > 0)
      docs[2].words.push_back({encode_word(FeatureSpace::Size, {i, sv[1] > sv[0] ? 1 : 0}), 1});
  }
  return docs;
}

namespace detail {

struct DisjointSets {
  std::vector<int> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent[static_cast<std::size_t>(b)] = a;
  }
};

}  // namespace detail

// Two-pass labelling with union-find. Blobs are returned ordered by their
// first cell in row-major order, each with sorted cells. Duplicate input
// cells are collapsed.
inline std::vector<std::vector<Cell>> connected_components(std::span<const Cell> cells, int grid_w, int grid_h,
                                                           int connectivity = 4) {
  if (connectivity != 4 && connectivity != 8) throw ConfigError("connectivity must be 4 or 8");
  std::vector<int> label(static_cast<std::size_t>(grid_w) * static_cast<std::size_t>(grid_h), -1);
  std::vector<Cell> uniq(cells.begin(), cells.end());
  for (const Cell& c : uniq)
    if (c.x < 0 || c.y < 0 || c.x >= grid_w || c.y >= grid_h)
      throw ConfigError("cell (" + std::to_string(c.x) + "," + std::to_string(c.y) + ") outside the grid");
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  for (std::size_t i = 0; i < uniq.size(); ++i)
    label[static_cast<std::size_t>(uniq[i].y * grid_w + uniq[i].x)] = static_cast<int>(i);

  detail::DisjointSets sets(uniq.size());
  auto at = [&](int x, int y) -> int {
    if (x < 0 || y < 0 || x >= grid_w || y >= grid_h) return -1;
    return label[static_cast<std::size_t>(y * grid_w + x)];
  };
  for (std::size_t i = 0; i < uniq.size(); ++i) {
    const Cell& c = uniq[i];
    // Backward neighbours only; forward ones are visited from the other side.
    const int west = at(c.x - 1, c.y);
    const int north = at(c.x, c.y - 1);
    if (west >= 0) sets.unite(static_cast<int>(i), west);
    if (north >= 0) sets.unite(static_cast<int>(i), north);
    if (connectivity == 8) {
      const int nw = at(c.x - 1, c.y - 1);
      const int ne = at(c.x + 1, c.y - 1);
      if (nw >= 0) sets.unite(static_cast<int>(i), nw);
      if (ne >= 0) sets.unite(static_cast<int>(i), ne);
    }
  }
  std::vector<int> blob_of_root(uniq.size(), -1);
  std::vector<std::vector<Cell>> blobs;
  for (std::size_t i = 0; i < uniq.size(); ++i) {
    const int root = sets.find(static_cast<int>(i));
    auto& b = blob_of_root[static_cast<std::size_t>(root)];
    if (b < 0) {
      b = static_cast<int>(blobs.size());
      blobs.emplace_back();
    }
    blobs[static_cast<std::size_t>(b)].push_back(uniq[i]);
  }
  return blobs;
}

// Split a document into one document per connected component of the cells
// its words occupy. Words keep their counts; outputs are tagged 0, 1, ...
inline std::vector<ClipDocument> clip_blob_decompose(const ClipDocument& doc, const SceneConfig& cfg,
                                                     int connectivity = 4) {
  if (doc.words.empty()) return {};
  std::vector<Cell> cells;
  cells.reserve(doc.words.size());
  for (const auto& w : doc.words) cells.push_back(cfg.cell_at(decode_word(doc.space, w.word).cell_index));
  const auto blobs = connected_components(cells, cfg.grid_w, cfg.grid_h, connectivity);
  std::vector<int> blob_of_cell(static_cast<std::size_t>(cfg.cell_count()), -1);
  for (std::size_t b = 0; b < blobs.size(); ++b)
    for (const Cell& c : blobs[b]) blob_of_cell[static_cast<std::size_t>(cfg.index_of(c))] = static_cast<int>(b);

  std::vector<ClipDocument> out(blobs.size());
  for (std::size_t b = 0; b < blobs.size(); ++b) {
    out[b].clip_id = doc.clip_id;
    out[b].frames = doc.frames;
    out[b].space = doc.space;
    out[b].blob_tag = static_cast<int>(b);
  }
  for (const auto& w : doc.words) {
    const int cell = decode_word(doc.space, w.word).cell_index;
    out[static_cast<std::size_t>(blob_of_cell[static_cast<std::size_t>(cell)])].words.push_back(w);
  }
  return out;
}

}  // namespace vidtopic
