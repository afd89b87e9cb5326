#include <gtest/gtest.h>

#include <random>

#include "golden.hpp"
#include "support.hpp"
#include "vidtopic/query.hpp"
#include "vidtopic/refinery.hpp"

using namespace vidtopic;

namespace {

ModelSet secondary_set(const PipelineResult& r) {
  ModelSet ms{};
  for (std::size_t i = 0; i < 3; ++i) ms[i] = r.secondary[i] ? &*r.secondary[i] : nullptr;
  return ms;
}

QuerySpec random_spec(std::mt19937_64& gen) {
  std::uniform_int_distribution<int> pick(0, 1000);
  QuerySpec q;
  std::vector<FeatureSpace> all(kAllSpaces.begin(), kAllSpaces.end());
  std::shuffle(all.begin(), all.end(), gen);
  q.spaces.assign(all.begin(), all.begin() + 1 + pick(gen) % 3);
  q.section.scene = "scene_" + std::to_string(pick(gen));
  if (pick(gen) % 2) q.section.range = FrameInterval{pick(gen), 1001 + pick(gen)};
  auto ref = [&] { return TopicRef{q.spaces[pick(gen) % q.spaces.size()], pick(gen) % 40}; };
  const double active = 0.05 * (1 + pick(gen) % 12);
  switch (pick(gen) % 4) {
    case 0: q.strategy = SingleTopicQuery{ref(), active}; break;
    case 1: q.strategy = CoOccurrenceQuery{{ref(), ref(), ref()}, active}; break;
    case 2: {
      SequenceQuery s{{ref(), ref()}, {}};
      s.params.match_reward = 0.5 + pick(gen) % 5;
      s.params.mismatch_penalty = 0.25 * (1 + pick(gen) % 4);
      s.params.gap_penalty = 1.0 / 3.0;
      if (pick(gen) % 2) s.params.score_threshold = 2.5;
      s.params.activation_threshold = active;
      s.params.soft_match = pick(gen) % 2;
      q.strategy = s;
      break;
    }
    default: {
      SimilarQuery s;
      s.k = 1 + pick(gen) % 9;
      if (pick(gen) % 2) {
        SpaceDistributions d;
        for (auto sp : q.spaces) d[space_index(sp)] = std::vector<double>{0.1, 0.2, 0.7};
        s.distributions = {d, d};
      } else {
        s.example_clips = std::pair<std::int64_t, std::int64_t>{3, 3 + pick(gen) % 4};
      }
      q.strategy = s;
    }
  }
  return q;
}

// Synthetic secondary motion model on a 10x10 grid: an eastward and a
// westward topic along row 2, plus a southward topic down column 7.
TopicModel lane_model() {
  TopicModel m;
  m.space = FeatureSpace::Motion;
  m.stage = ModelStage::Secondary;
  m.grid_w = m.grid_h = 10;
  m.vocabulary_size = 100 * values_per_cell(FeatureSpace::Motion);
  auto topic = [&](int id, std::vector<Cell> cells, Direction d) {
    Topic t;
    t.id = id;
    t.space = FeatureSpace::Motion;
    t.direction = d;
    for (Cell c : cells) t.words.push_back({encode_word(FeatureSpace::Motion, {c.y * 10 + c.x, static_cast<int>(d)}), 1.0 / cells.size()});
    std::sort(t.words.begin(), t.words.end(), [](auto& a, auto& b) { return a.word < b.word; });
    return t;
  };
  std::vector<Cell> row, col;
  for (int x = 0; x < 10; ++x) row.push_back({x, 2});
  for (int y = 4; y < 10; ++y) col.push_back({7, y});
  m.topics = {topic(0, row, Direction::E), topic(1, row, Direction::W), topic(2, col, Direction::S)};
  return m;
}

}  // namespace

TEST(Golden, TwentyCasesIncludingAllMandatoryKeywords) {
  const auto r = vtest::run_dsl_golden(std::string(VIDTOPIC_DATA_DIR) + "/dsl_golden.json");
  EXPECT_EQ(r.cases, 20u);
  EXPECT_EQ(r.keyword_cases, 3u);
  for (const auto& f : r.failures) ADD_FAILURE() << f;
}

TEST(Parse, SpecExample) {
  const auto q = parse_query("QUERY DOMAIN motion SECTION scene1 SEARCH TYPE topic-sequence(t3,t7,t9)");
  EXPECT_EQ(q.spaces, std::vector<FeatureSpace>{FeatureSpace::Motion});
  EXPECT_EQ(q.section.scene, "scene1");
  ASSERT_EQ(q.kind(), Strategy::TopicSequence);
  const auto& s = std::get<SequenceQuery>(q.strategy);
  EXPECT_EQ(s.topics, (std::vector<TopicRef>{{FeatureSpace::Motion, 3}, {FeatureSpace::Motion, 7}, {FeatureSpace::Motion, 9}}));
  EXPECT_EQ(s.params, AlignmentParams{});
}

TEST(Parse, MissingKeywordNamesIt) {
  try {
    parse_query("QUERY DOMAIN motion SEARCH TYPE single-topic(t2)");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.missing_keyword(), "SECTION");
    EXPECT_NE(std::string(e.what()).find("SECTION"), std::string::npos);
  }
  try {
    parse_query("");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.missing_keyword(), "QUERY DOMAIN");
    EXPECT_EQ(e.position(), 0u);
  }
}

TEST(Parse, RejectsMalformedPayloads) {
  const std::string head = "QUERY DOMAIN motion SECTION s SEARCH TYPE ";
  for (const char* bad : {"single-topic()", "single-topic(t1, t2)", "single-topic(t1, active=-1)",
                          "single-topic(t1, active=0.2, active=0.3)", "topic-sequence()", "topic-sequence(t1, gap=0)",
                          "topic-sequence(t1, soft=maybe)", "similar-clips(k=2)", "similar-clips(clips=5..2)",
                          "similar-clips(example=10..10)", "similar-clips(clips=1..2, example=0..30)",
                          "similar-clips({p=[1]})", "similar-clips(t1)", "co-occurrence(t1, {m=[1]})",
                          "single-topic(t1x)", "single-topic(q:t1)", "single-topic(t1", "similar-clips(clips=1..2, k=0)"})
    EXPECT_THROW(parse_query(head + bad), ParseError) << bad;
  EXPECT_THROW(parse_query("QUERY DOMAIN motion,motion SECTION s SEARCH TYPE single-topic(t1)"), ParseError);
  EXPECT_THROW(parse_query("QUERY DOMAIN motion SECTION s[5:5] SEARCH TYPE single-topic(t1)"), ParseError);
  EXPECT_THROW(parse_query("QUERY DOMAIN SECTION s SEARCH TYPE single-topic(t1)"), ParseError);
}

TEST(Parse, StrategyAliases) {
  const std::string head = "QUERY DOMAIN motion SECTION s SEARCH TYPE ";
  EXPECT_EQ(parse_query(head + "single(t1)"), parse_query(head + "Single_Topic(t1)"));
  EXPECT_EQ(parse_query(head + "sequence(t1,t2)"), parse_query(head + "topic-sequence(t1,t2)"));
  EXPECT_EQ(parse_query(head + "similar(clips=0..1)"), parse_query(head + "SIMILAR-CLIPS(clips=0..1)"));
}

TEST(Unparse, RoundTripsRandomQueries) {
  std::mt19937_64 gen(31);
  for (int i = 0; i < 500; ++i) {
    const auto q = random_spec(gen);
    const auto text = unparse(q);
    ASSERT_EQ(parse_query(text), q) << text;
  }
}

TEST(StructuredJson, RoundTripsAndValidatesLikeText) {
  std::mt19937_64 gen(32);
  for (int i = 0; i < 200; ++i) {
    const auto q = random_spec(gen);
    ASSERT_EQ(query_from_json(to_json(q)), q) << to_json(q).dump();
  }
  Json j = to_json(parse_query("QUERY DOMAIN motion SECTION s SEARCH TYPE single-topic(t1)"));
  j.erase("section");
  try {
    query_from_json(j);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.missing_keyword(), "section");
  }
  Json bad = to_json(parse_query("QUERY DOMAIN motion SECTION s SEARCH TYPE single-topic(t1)"));
  bad["strategy"]["topic"] = "p:t1";
  EXPECT_THROW(query_from_json(bad), ParseError);
  EXPECT_EQ(topic_ref_from_json(Json{{"space", "size"}, {"topic", 4}}, {FeatureSpace::Size}),
            (TopicRef{FeatureSpace::Size, 4}));
}

TEST(Sketch, StrokeAlongATopicRanksItFirst) {
  const auto m = lane_model();
  const ModelSet ms{&m, nullptr, nullptr};
  SketchQuery q;
  q.strokes.push_back({{{0, 2}, {9, 2}}, FeatureSpace::Motion});
  q.strokes.push_back({{{9, 2}, {0, 2}}, FeatureSpace::Motion});
  q.strokes.push_back({{{7, 4}, {7, 9}}, FeatureSpace::Motion});
  q.strokes.push_back({{{0, 8}, {4, 8}}, FeatureSpace::Motion});
  const auto r = sketch_to_topics(q, ms);
  ASSERT_EQ(r.strokes.size(), 4u);
  ASSERT_EQ(r.strokes[0].size(), 1u) << "opposite direction does not match";
  EXPECT_EQ(r.strokes[0][0].topic.topic, 0);
  EXPECT_DOUBLE_EQ(r.strokes[0][0].score, 1.0);
  EXPECT_EQ(r.strokes[1][0].topic.topic, 1);
  EXPECT_EQ(r.strokes[2][0].topic.topic, 2);
  EXPECT_TRUE(r.strokes[3].empty());
}

TEST(Sketch, PartialStrokeScoresByOverlap) {
  const auto m = lane_model();
  SketchQuery q;
  q.strokes.push_back({{{0, 2}, {4, 2}}, FeatureSpace::Motion});
  const auto r = sketch_to_topics(q, ModelSet{&m, nullptr, nullptr});
  ASSERT_FALSE(r.strokes[0].empty());
  EXPECT_DOUBLE_EQ(r.strokes[0][0].score, 5.0 / 10.0);
}

TEST(Sketch, RegionOnPersistenceTopicSupportScoresOne) {
  const auto& run = vtest::junction_run();
  const auto ms = secondary_set(run);
  const auto& persist = *run.secondary[space_index(FeatureSpace::Persistence)];
  for (const auto& t : persist.topics) {
    SketchQuery q;
    q.regions.push_back({topic_support(t, 0.1, persist.grid_w, persist.grid_h), FeatureSpace::Persistence});
    const auto r = sketch_to_topics(q, ms);
    ASSERT_FALSE(r.regions[0].empty());
    EXPECT_EQ(r.regions[0][0].topic, (TopicRef{FeatureSpace::Persistence, t.id}));
    EXPECT_DOUBLE_EQ(r.regions[0][0].score, 1.0);
  }
  SketchQuery p1;
  p1.regions.push_back(scenarios::parking_region(scenarios::kParkingP1));
  const auto r = sketch_to_topics(p1, ms);
  ASSERT_FALSE(r.regions[0].empty());
  EXPECT_EQ(r.regions[0][0].topic.space, FeatureSpace::Persistence);
}

TEST(Sketch, JunctionRouteStrokesResolveToMotionTopics) {
  const auto& run = vtest::junction_run();
  const auto ms = secondary_set(run);
  for (const auto& agent : run.scenario->agents) {
    if (agent.label != "turn") continue;
    SketchQuery q;
    q.strokes = scenarios::route_strokes(agent.path);
    const auto r = sketch_to_topics(q, ms, 2);
    for (const auto& ranked : r.strokes) {
      ASSERT_FALSE(ranked.empty());
      EXPECT_LE(ranked.size(), 2u);
      EXPECT_EQ(ranked[0].topic.space, FeatureSpace::Motion);
      if (ranked.size() == 2) {
        EXPECT_GE(ranked[0].score, ranked[1].score);
      }
    }
    break;
  }
}

TEST(Sketch, ValidatesInput) {
  const auto m = lane_model();
  const ModelSet ms{&m, nullptr, nullptr};
  SketchQuery outside;
  outside.strokes.push_back({{{0, 2}, {10, 2}}, FeatureSpace::Motion});
  EXPECT_THROW(sketch_to_topics(outside, ms), ConfigError);
  SketchQuery single;
  single.strokes.push_back({{{0, 2}}, FeatureSpace::Motion});
  EXPECT_THROW(sketch_to_topics(single, ms), ConfigError);
  EXPECT_THROW(sketch_to_topics(SketchQuery{}, ms, 0), ConfigError);
  auto primary = m;
  primary.stage = ModelStage::Primary;
  EXPECT_THROW(sketch_to_topics(SketchQuery{}, ModelSet{&primary, nullptr, nullptr}), ConfigError);
}

TEST(Sketch, JsonRoundTrip) {
  SketchQuery q;
  q.strokes.push_back({{{0, 2}, {4, 2}, {4, 6}}, FeatureSpace::Motion});
  q.regions.push_back({{{1, 1}, {1, 2}}, FeatureSpace::Size});
  const auto j = to_json(q);
  EXPECT_EQ(j["strokes"][0]["directions"], (Json{"E", "S"}));
  EXPECT_EQ(sketch_from_json(j), q);
  EXPECT_EQ(sketch_from_json(Json::parse(R"({"strokes":[{"points":[{"x":0,"y":2},[4,2]]}]})")).strokes[0].points,
            (std::vector<Cell>{{0, 2}, {4, 2}}));
  EXPECT_THROW(sketch_from_json(Json::parse(R"({"regions":[{"cells":[[1]]}]})")), ConfigError);
}

TEST(Rasterize, BresenhamCoversEndpoints) {
  const auto cells = rasterize_segment({0, 0}, {3, 1});
  EXPECT_EQ(cells.front(), (Cell{0, 0}));
  EXPECT_EQ(cells.back(), (Cell{3, 1}));
  EXPECT_EQ(cells.size(), 4u);
  for (std::size_t i = 1; i < cells.size(); ++i) {
    EXPECT_LE(std::abs(cells[i].x - cells[i - 1].x), 1);
    EXPECT_LE(std::abs(cells[i].y - cells[i - 1].y), 1);
  }
}

TEST(Example, ClipAlignedExampleReproducesIndexedDistribution) {
  const auto& run = vtest::junction_run();
  const auto ms = secondary_set(run);
  const SceneSimulator sim(run.scene, *run.scenario, run.config.simulation_seed);
  const std::int64_t F = run.scene.frames_per_clip;
  for (std::int64_t clip : {12, 100, 201}) {
    std::vector<CellMeasurementFrame> frames;
    for (std::int64_t t = clip * F; t < (clip + 1) * F + 7; ++t) frames.push_back(sim.frame(t));
    const auto d = example_to_distribution(frames, run.scene, ms, run.config.ingest, run.config.fold_in);
    ASSERT_EQ(d.size(), 1u) << "the partial trailing clip is dropped";
    const auto& entry = run.index.full.entries[static_cast<std::size_t>(clip)];
    for (auto s : kAllSpaces) {
      const int K = run.index.full.num_topics(s);
      ASSERT_TRUE(d[0][space_index(s)]);
      const auto expect = complete_distribution(entry.in(s), K);
      ASSERT_EQ(d[0][space_index(s)]->size(), expect.size());
      for (int k = 0; k < K; ++k) EXPECT_NEAR((*d[0][space_index(s)])[k], expect[k], 1e-9) << "clip " << clip;
    }
  }
  std::vector<CellMeasurementFrame> short_example{sim.frame(0)};
  EXPECT_THROW(example_to_distribution(short_example, run.scene, ms), ConfigError);
}

TEST(Example, DatabaseClipRange) {
  const auto& db = vtest::junction_run().index.sections.front().db;
  const auto d = entries_to_distribution(db, 3, 5);
  ASSERT_EQ(d.size(), 3u);
  for (const auto& sd : d)
    for (auto s : kAllSpaces) {
      ASSERT_TRUE(sd[space_index(s)]);
      double sum = 0;
      for (double v : *sd[space_index(s)]) sum += v;
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  EXPECT_THROW(entries_to_distribution(db, 5, 3), NotFoundError);
  EXPECT_THROW(entries_to_distribution(db, 0, 100000), NotFoundError);
}
