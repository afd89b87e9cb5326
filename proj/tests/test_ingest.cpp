#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vidtopic/ingest.hpp"
#include "vidtopic/pipeline.hpp"
#include "vidtopic/scenarios.hpp"

using namespace vidtopic;

namespace {

SceneConfig small_scene(int frames_per_clip = 4) {
  SceneParams p;
  p.frame_width_px = 60;
  p.frame_height_px = 40;
  p.cell_size_px = 10;
  p.frames_per_clip = frames_per_clip;
  return build_scene_config(p);
}

CellMeasurementFrame blank(const SceneConfig& cfg, std::int64_t t) {
  CellMeasurementFrame f;
  f.frame_index = t;
  f.cells.resize(static_cast<std::size_t>(cfg.cell_count()));
  return f;
}

void paint(CellMeasurementFrame& f, const SceneConfig& cfg, Cell c, float fx, float fy, int blob_size = 1) {
  auto& r = f.cells[static_cast<std::size_t>(cfg.index_of(c))];
  r.foreground = true;
  r.flow_x = fx;
  r.flow_y = fy;
  r.blob_id = 0;
  r.blob_size_cells = blob_size;
}

}  // namespace

TEST(ConnectedComponents, MatchesFloodFillOnRandomGrids) {
  EXPECT_EQ(vtest::check_ccl_against_flood_fill(1000), "");
}

TEST(ConnectedComponents, DiagonalNeighboursDependOnConnectivity) {
  const std::vector<Cell> cells{{0, 0}, {1, 1}, {2, 2}};
  EXPECT_EQ(connected_components(cells, 3, 3, 4).size(), 3u);
  EXPECT_EQ(connected_components(cells, 3, 3, 8).size(), 1u);
}

TEST(ConnectedComponents, OrderedByFirstCellAndDeduplicated) {
  const std::vector<Cell> cells{{4, 3}, {0, 0}, {0, 0}, {1, 0}};
  const auto blobs = connected_components(cells, 5, 5);
  ASSERT_EQ(blobs.size(), 2u);
  EXPECT_EQ(blobs[0], (std::vector<Cell>{{0, 0}, {1, 0}}));
  EXPECT_EQ(blobs[1], (std::vector<Cell>{{4, 3}}));
}

TEST(ConnectedComponents, RejectsBadInput) {
  const std::vector<Cell> off{{5, 0}};
  EXPECT_THROW(connected_components(off, 5, 5), ConfigError);
  EXPECT_THROW(connected_components({}, 5, 5, 6), ConfigError);
  EXPECT_TRUE(connected_components({}, 5, 5).empty());
}

TEST(Quantize, CompassSectors) {
  EXPECT_EQ(quantize_direction(2, 0, 1), Direction::E);
  EXPECT_EQ(quantize_direction(0, -2, 1), Direction::N);  // image y grows downwards
  EXPECT_EQ(quantize_direction(-2, 0, 1), Direction::W);
  EXPECT_EQ(quantize_direction(0, 2, 1), Direction::S);
  EXPECT_EQ(quantize_direction(2, -2, 1), Direction::NE);
  EXPECT_EQ(quantize_direction(-2, 2, 1), Direction::SW);
  EXPECT_FALSE(quantize_direction(0.5, 0, 1).has_value());
  EXPECT_FALSE(quantize_direction(0, 0, 0).has_value());
  EXPECT_EQ(direction_from_angle(22.4), Direction::E);
  EXPECT_EQ(direction_from_angle(22.5), Direction::NE);
  EXPECT_EQ(direction_from_angle(-22.5), Direction::E);
  EXPECT_EQ(direction_from_angle(382.0), Direction::E);
}

TEST(Words, EncodeDecodeRoundTrip) {
  for (auto s : kAllSpaces)
    for (int cell : {0, 17, 1535})
      for (int v = 0; v < values_per_cell(s); ++v) {
        const VisualWord w{cell, v};
        EXPECT_EQ(decode_word(s, encode_word(s, w)), w);
      }
}

TEST(Segment, DropsTrailingRemainder) {
  const auto cfg = small_scene(30);
  const auto clips = segment_clips(95, cfg);
  ASSERT_EQ(clips.size(), 3u);
  EXPECT_EQ(clips[2], (FrameInterval{60, 90}));
  EXPECT_TRUE(segment_clips(29, cfg).empty());
}

TEST(Extract, WordsPerSpace) {
  const auto cfg = small_scene(4);
  std::vector<CellMeasurementFrame> frames;
  for (int t = 0; t < 4; ++t) {
    auto f = blank(cfg, 8 + t);
    paint(f, cfg, {1, 1}, 5, 0);                 // moving east every frame
    paint(f, cfg, {3, 2}, 0, 0, 9);              // static, large
    if (t < 3) paint(f, cfg, {5, 3}, 0, 0);      // static for 3 of 4 frames
    if (t == 0) paint(f, cfg, {0, 3}, 0, 5);     // one south vote
    frames.push_back(f);
  }
  const auto docs = extract_clip_documents(frames, cfg);
  EXPECT_EQ(docs[0].clip_id, 2);
  EXPECT_EQ(docs[0].frames, (FrameInterval{8, 12}));
  const auto& motion = docs[space_index(FeatureSpace::Motion)].words;
  ASSERT_EQ(motion.size(), 2u);
  EXPECT_EQ(motion[0].word, encode_word(FeatureSpace::Motion, {cfg.index_of({1, 1}), int(Direction::E)}));
  EXPECT_EQ(motion[1].word, encode_word(FeatureSpace::Motion, {cfg.index_of({0, 3}), int(Direction::S)}));
  // 0.8 * 4 = 3.2 frames needed: only the always-static cell qualifies.
  const auto& persist = docs[space_index(FeatureSpace::Persistence)].words;
  ASSERT_EQ(persist.size(), 1u);
  EXPECT_EQ(persist[0].word, cfg.index_of({3, 2}));
  const auto& size = docs[space_index(FeatureSpace::Size)].words;
  ASSERT_EQ(size.size(), 4u);
  for (const auto& w : size) {
    const auto vw = decode_word(FeatureSpace::Size, w.word);
    EXPECT_EQ(vw.value, vw.cell_index == cfg.index_of({3, 2}) ? 1 : 0);
  }
  for (const auto& d : docs) EXPECT_NO_THROW(validate_document(d, cfg));
}

TEST(Extract, DirectionTieGoesToLowestIndex) {
  const auto cfg = small_scene(2);
  auto a = blank(cfg, 0), b = blank(cfg, 1);
  paint(a, cfg, {2, 2}, 0, 5);   // S
  paint(b, cfg, {2, 2}, 5, 0);   // E
  const auto docs = extract_clip_documents(std::vector{a, b}, cfg);
  ASSERT_EQ(docs[0].words.size(), 1u);
  EXPECT_EQ(decode_word(FeatureSpace::Motion, docs[0].words[0].word).value, int(Direction::E));
}

TEST(Extract, EmptyClipGivesEmptyDocuments) {
  const auto cfg = small_scene(3);
  const auto docs = extract_clip_documents(std::vector{blank(cfg, 0), blank(cfg, 1), blank(cfg, 2)}, cfg);
  for (const auto& d : docs) EXPECT_TRUE(d.empty());
}

TEST(Extract, RejectsWrongClipLength) {
  const auto cfg = small_scene(3);
  EXPECT_THROW(extract_clip_documents(std::vector{blank(cfg, 0)}, cfg), ConfigError);
  IngestParams bad;
  bad.persistence_fraction = 0;
  EXPECT_THROW(extract_clip_documents(std::vector{blank(cfg, 0), blank(cfg, 1), blank(cfg, 2)}, cfg, bad),
               ConfigError);
}

TEST(BlobDecompose, SplitsDocumentByComponent) {
  const auto cfg = small_scene(2);
  ClipDocument d;
  d.space = FeatureSpace::Persistence;
  d.clip_id = 4;
  for (Cell c : {Cell{0, 0}, Cell{1, 0}, Cell{4, 3}, Cell{5, 3}}) d.words.push_back({cfg.index_of(c), 2});
  const auto parts = clip_blob_decompose(d, cfg);
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0].words.size(), 2u);
  EXPECT_EQ(parts[1].words.size(), 2u);
  EXPECT_EQ(parts[1].blob_tag, 1);
  EXPECT_EQ(parts[0].length() + parts[1].length(), d.length());
  EXPECT_TRUE(clip_blob_decompose(ClipDocument{}, cfg).empty());
}

TEST(IngestFrames, JunctionClipCount) {
  const auto cfg = build_scene_config({});
  const SceneSimulator sim(cfg, scenarios::junction(), 1);
  const auto out = ingest_frames(simulator_source(sim), cfg, {});
  EXPECT_EQ(out.frames_read, 7200);
  EXPECT_EQ(out.clips.size(), 240u);
  for (std::size_t i = 0; i < out.clips.size(); ++i) {
    EXPECT_EQ(out.clips[i].clip_id, static_cast<std::int64_t>(i));
    for (const auto& d : out.clips[i].docs) {
      if (d) {
        EXPECT_FALSE(d->empty());
      }
    }
  }
}

TEST(IngestFrames, RejectsGapsAndMisalignedStart) {
  const auto cfg = small_scene(2);
  std::vector<CellMeasurementFrame> frames{blank(cfg, 0), blank(cfg, 2)};
  std::size_t i = 0;
  auto src = [&]() -> std::optional<CellMeasurementFrame> {
    if (i >= frames.size()) return std::nullopt;
    return frames[i++];
  };
  EXPECT_THROW(ingest_frames(src, cfg, {}), FormatError);
  frames = {blank(cfg, 1), blank(cfg, 2)};
  i = 0;
  EXPECT_THROW(ingest_frames(src, cfg, {}), FormatError);
}
