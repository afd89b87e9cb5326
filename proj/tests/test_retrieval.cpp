#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vidtopic/retrieval.hpp"

using namespace vidtopic;

namespace {

constexpr TopicRef A{FeatureSpace::Motion, 0};
constexpr TopicRef B{FeatureSpace::Motion, 1};
constexpr TopicRef C{FeatureSpace::Motion, 2};
constexpr TopicRef D{FeatureSpace::Motion, 3};

ClipSlot slot(std::initializer_list<TopicRef> present) {
  ClipSlot s;
  for (const auto& r : present) s.push_back({r, 1.0});
  return s;
}

std::vector<double> random_distribution(std::mt19937_64& gen, int n) {
  std::gamma_distribution<double> g(0.5, 1.0);
  std::vector<double> p(n);
  double s = 0;
  for (auto& v : p) s += (v = g(gen) + 1e-12);
  for (auto& v : p) v /= s;
  return p;
}

Database stream_db(const std::vector<SparseDistribution>& motion, int topics = 4) {
  Database db;
  db.header.scene = build_scene_config({});
  db.header.section = {"all", {0, 30 * static_cast<std::int64_t>(motion.size())}};
  db.header.models[0] = ModelRef{"00", topics, ""};
  for (std::size_t c = 0; c < motion.size(); ++c) {
    ClipIndexEntry e;
    e.clip_id = static_cast<std::int64_t>(c);
    e.frames = {30 * e.clip_id, 30 * e.clip_id + 30};
    e.spaces[0] = motion[c];
    db.entries.push_back(e);
  }
  return db;
}

}  // namespace

TEST(SmithWaterman, MatchesExhaustiveEnumeration) {
  const auto start = std::chrono::steady_clock::now();
  std::size_t cases = 0;
  EXPECT_EQ(vtest::check_smith_waterman_exhaustive(&cases), "");
  EXPECT_GT(cases, 2'000'000u);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 10.0);
}

TEST(SmithWaterman, WorkedExamples) {
  const std::vector<TopicRef> q{A, B, C};
  const std::vector<ClipSlot> exact{slot({A}), slot({B}), slot({C})};
  AlignmentParams p;
  const auto hits = smith_waterman(q, exact, p);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].score, 6.0);
  EXPECT_EQ(hits[0].first, 0u);
  EXPECT_EQ(hits[0].last, 2u);

  const std::vector<ClipSlot> substituted{slot({A}), slot({D}), slot({C})};
  const auto best = best_local_alignment(q, substituted, p, std::vector<bool>(3, false));
  ASSERT_TRUE(best);
  EXPECT_EQ(best->score, 3.0);
  EXPECT_TRUE(smith_waterman(q, substituted, p).empty()) << "3 is below the default threshold 5";

  EXPECT_TRUE(smith_waterman(q, std::vector<ClipSlot>{}, p).empty());
  EXPECT_THROW(smith_waterman(std::vector<TopicRef>{}, exact, p), ConfigError);
}

TEST(SmithWaterman, RepeatedOccurrencesAreAllFound) {
  const std::vector<TopicRef> q{A, B};
  std::vector<ClipSlot> stream;
  for (int r = 0; r < 3; ++r) {
    stream.push_back(slot({A}));
    stream.push_back(slot({B}));
    stream.push_back(slot({}));
    stream.push_back(slot({}));
  }
  const auto hits = smith_waterman(q, stream, {});
  ASSERT_EQ(hits.size(), 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(hits[r].first, 4 * r) << "ties resolve to the earliest span";
    EXPECT_EQ(hits[r].last, 4 * r + 1);
  }
}

TEST(SmithWaterman, GapsBridgeNoise) {
  const std::vector<TopicRef> q{A, B, C};
  const std::vector<ClipSlot> stream{slot({A}), slot({B}), slot({}), slot({C})};
  const auto hits = smith_waterman(q, stream, {});
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].score, 5.0);
  EXPECT_EQ(hits[0].last, 3u);
}

TEST(SmithWaterman, SoftMatchInterpolates) {
  AlignmentParams p;
  p.soft_match = true;
  const ClipSlot s{{A, 0.5}};
  EXPECT_DOUBLE_EQ(substitution_score(s, A, p), 0.5);
  EXPECT_DOUBLE_EQ(substitution_score(s, B, p), -1.0);
  EXPECT_DOUBLE_EQ(substitution_score(ClipSlot{{A, 1.0}}, A, p), 2.0);
  p.soft_match = false;
  EXPECT_DOUBLE_EQ(substitution_score(ClipSlot{{A, 0.09}}, A, p), -1.0);
  EXPECT_DOUBLE_EQ(substitution_score(ClipSlot{{A, 0.1}}, A, p), 2.0);
  p.soft_match = true;
  p.score_threshold = 0.1;
  const auto hits = smith_waterman(std::vector<TopicRef>{A}, std::vector<ClipSlot>{ClipSlot{{A, 0.6}}}, p);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_NEAR(hits[0].score, 0.8, 1e-12);
}

TEST(SmithWaterman, RejectsBadParameters) {
  AlignmentParams p;
  p.gap_penalty = 0;
  EXPECT_THROW(smith_waterman(std::vector<TopicRef>{A}, std::vector<ClipSlot>{}, p), ConfigError);
  p = {};
  p.score_threshold = -1;
  EXPECT_THROW(smith_waterman(std::vector<TopicRef>{A}, std::vector<ClipSlot>{}, p), ConfigError);
  EXPECT_DOUBLE_EQ(AlignmentParams{}.resolved_threshold(3), 5.0);
}

TEST(SequenceSearch, ReportsMatchedTopicsPerClip) {
  const auto db = stream_db({{{0, 0.9}}, {{1, 0.8}, {3, 0.2}}, {}, {{2, 1.0}}});
  const auto r = search_topic_sequence(db, {A, B, C});
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].start_clip, 0);
  EXPECT_EQ(r[0].end_clip, 3);
  EXPECT_EQ(r[0].start_frame, 0);
  EXPECT_EQ(r[0].end_frame, 120);
  EXPECT_EQ(r[0].matched, (std::vector<std::vector<TopicRef>>{{A}, {B}, {}, {C}}));
  EXPECT_THROW(search_topic_sequence(db, {A, TopicRef{FeatureSpace::Motion, 4}}), ConfigError);
  EXPECT_THROW(search_topic_sequence(db, {TopicRef{FeatureSpace::Size, 0}}), ConfigError);
}

TEST(Hellinger, KnownValues) {
  const std::vector<double> half{0.5, 0.5}, point{1.0, 0.0}, other{0.0, 1.0};
  EXPECT_NEAR(hellinger(half, point), 0.5412, 1e-4);
  EXPECT_DOUBLE_EQ(hellinger(half, half), 0.0);
  EXPECT_DOUBLE_EQ(hellinger(point, other), 1.0);
  EXPECT_DOUBLE_EQ(hellinger(std::vector<double>{1.0}, point), 0.0) << "shorter input is zero padded";
  EXPECT_THROW(hellinger(std::vector<double>{0.5}, point), ConfigError);
  EXPECT_THROW(hellinger(std::vector<double>{1.5, -0.5}, point), ConfigError);
}

TEST(Hellinger, MetricAxiomsOnRandomTriples) {
  std::mt19937_64 gen(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + trial % 9;
    const auto p = random_distribution(gen, n), q = random_distribution(gen, n), r = random_distribution(gen, n);
    const double pq = hellinger(p, q), qp = hellinger(q, p), pr = hellinger(p, r), qr = hellinger(q, r);
    double bc = 0;
    for (int i = 0; i < n; ++i) bc += std::sqrt(p[i] * q[i]);
    EXPECT_NEAR(pq, std::sqrt(std::max(0.0, 1.0 - bc)), 1e-7) << "Bhattacharyya form";
    EXPECT_EQ(pq, qp);
    EXPECT_GE(pq, 0.0);
    EXPECT_LE(pq, 1.0);
    EXPECT_NEAR(hellinger(p, p), 0.0, 1e-12);
    EXPECT_LE(pr, pq + qr + 1e-12);
  }
}

TEST(ActiveTopics, ThresholdIsInclusive) {
  ClipIndexEntry e;
  e.spaces[0] = {{0, 0.1}, {2, 0.5}, {3, 0.09}};
  EXPECT_EQ(active_topics(e, FeatureSpace::Motion, 0.1), (std::vector<int>{0, 2}));
  EXPECT_TRUE(active_topics(e, FeatureSpace::Size, 0.1).empty());
  EXPECT_THROW(active_topics(e, FeatureSpace::Motion, 0.01, 0.05), ConfigError);
}

TEST(SingleTopic, MergesConsecutiveActiveClips) {
  const auto db = stream_db({{{0, 0.5}}, {{0, 0.2}}, {{1, 1.0}}, {{0, 0.3}}, {{0, 0.3}}, {{0, 0.05}}});
  const auto r = search_single_topic(db, A);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].start_clip, 0);
  EXPECT_EQ(r[0].end_clip, 1);
  EXPECT_NEAR(r[0].score, 0.35, 1e-12);
  EXPECT_EQ(r[1].start_clip, 3);
  EXPECT_EQ(r[1].end_clip, 4);
  EXPECT_EQ(r[1].end_frame, 150);
  EXPECT_EQ(r[1].matched.size(), 2u);
  EXPECT_TRUE(search_single_topic(db, D).empty());
  EXPECT_EQ(search_single_topic(db, A, 0.04).size(), 2u) ;
  EXPECT_EQ(search_single_topic(db, A, 0.04)[1].end_clip, 5);
}

TEST(CoOccurrence, NeedsEveryTopicInEachClip) {
  const auto db = stream_db({{{0, 0.5}, {1, 0.5}}, {{0, 0.7}, {1, 0.2}}, {{0, 1.0}}, {{0, 0.4}, {1, 0.6}}});
  const auto r = search_cooccurrence(db, {A, B});
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].end_clip, 1);
  EXPECT_NEAR(r[0].score, (0.5 + 0.2) / 2, 1e-12);
  EXPECT_EQ(r[1].start_clip, 3);
  EXPECT_NEAR(r[1].score, 0.4, 1e-12);
  EXPECT_EQ(r[1].matched, (std::vector<std::vector<TopicRef>>{{A, B}}));
  EXPECT_THROW(search_cooccurrence(db, {A}), ConfigError);
}

TEST(SimilarClips, RanksByHellingerWithEarlierTies) {
  const SparseDistribution x{{0, 0.7}, {1, 0.3}}, y{{2, 1.0}};
  const auto db = stream_db({y, x, y, x});
  const std::vector<FeatureSpace> spaces{FeatureSpace::Motion};
  SpaceDistributions q;
  q[0] = std::vector<double>{0.7, 0.3, 0.0, 0.0};
  const auto r = search_similar_clips(db, spaces, std::vector{q}, 3);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0].start_clip, 1);
  EXPECT_NEAR(r[0].score, 0.0, 1e-12);
  EXPECT_EQ(r[1].start_clip, 3);
  EXPECT_EQ(r[2].start_clip, 0);
  EXPECT_NEAR(r[2].score, 1.0, 1e-12);
  EXPECT_THROW(search_similar_clips(db, spaces, std::vector{q}, 0), ConfigError);
}

TEST(SimilarClips, WindowSumsOffsets) {
  const SparseDistribution x{{0, 1.0}}, y{{1, 1.0}};
  const auto db = stream_db({x, x, y, x, y});
  const std::vector<FeatureSpace> spaces{FeatureSpace::Motion};
  SpaceDistributions qx, qy;
  qx[0] = std::vector<double>{1, 0, 0, 0};
  qy[0] = std::vector<double>{0, 1, 0, 0};
  const auto r = search_similar_clips(db, spaces, std::vector{qx, qy}, 10);
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r[0].start_clip, 1);
  EXPECT_EQ(r[0].end_clip, 2);
  EXPECT_EQ(r[1].start_clip, 3);
  EXPECT_NEAR(r[3].score, 2.0, 1e-12);
  SpaceDistributions missing;
  EXPECT_THROW(search_similar_clips(db, spaces, std::vector{missing}, 1), ConfigError);
}

TEST(ResultsJson, CarriesFieldsInOrder) {
  const auto db = stream_db({{{0, 0.5}}});
  const auto j = results_json(search_single_topic(db, A));
  ASSERT_EQ(j.size(), 1u);
  EXPECT_EQ(j[0].at("strategy"), "single-topic");
  EXPECT_EQ(j[0].at("end_frame"), 30);
}
