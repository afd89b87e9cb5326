#include <gtest/gtest.h>

#include <numeric>

#include "support.hpp"
#include "vidtopic/index.hpp"
#include "vidtopic/retrieval.hpp"

using namespace vidtopic;

namespace {

Database sample_db() {
  Database db;
  db.header.scene = build_scene_config({});
  db.header.section = {"lot", {0, 90}};
  db.header.models[0] = ModelRef{"00ff", 3, "models/motion.secondary.json"};
  db.header.models[1] = ModelRef{"abcd", 2, ""};
  for (int c = 0; c < 3; ++c) {
    ClipIndexEntry e;
    e.clip_id = c;
    e.frames = {30 * c, 30 * c + 30};
    e.spaces[0] = {{0, 0.7}, {1, 0.27}, {2, 0.03}};
    if (c != 1) e.spaces[1] = {{0, 0.02}, {1, 0.98}};
    db.entries.push_back(e);
  }
  return db;
}

}  // namespace

TEST(Database, TextRoundTrip) {
  const auto db = sample_db();
  EXPECT_EQ(parse_database(database_text(db)), db);
}

TEST(Database, FileRoundTripAndModelCheck) {
  const auto& r = vtest::junction_run();
  vtest::TempDir dir("db");
  const auto& db = r.index.sections.front().db;
  save_database(db, dir.str("x.db"));
  ModelSet ms{};
  for (std::size_t i = 0; i < 3; ++i) ms[i] = r.secondary[i] ? &*r.secondary[i] : nullptr;
  EXPECT_EQ(load_database(dir.str("x.db"), &ms), db);
}

TEST(Database, TruncationIsDetected) {
  const auto text = database_text(sample_db());
  EXPECT_THROW(parse_database(text.substr(0, text.size() - 10)), FormatError);
  EXPECT_THROW(parse_database(text.substr(0, text.find('\n'))), FormatError);
  auto flipped = text;
  flipped[flipped.size() - 5] = flipped[flipped.size() - 5] == '1' ? '2' : '1';
  EXPECT_THROW(parse_database(flipped), FormatError);
  EXPECT_THROW(parse_database("{\"format\":\"other\"}\n"), FormatError);
}

TEST(Database, HashMismatchIsRejected) {
  const auto& r = vtest::junction_run();
  const auto& db = r.index.sections.front().db;
  TopicModel altered = *r.secondary[0];
  altered.topics[0].mass_hint += 1;
  ModelSet ms{&altered, &*r.secondary[1], &*r.secondary[2]};
  EXPECT_THROW(verify_models(db, ms), ModelMismatchError);
  ModelSet missing{nullptr, &*r.secondary[1], &*r.secondary[2]};
  EXPECT_THROW(verify_models(db, missing), ModelMismatchError);
}

TEST(Compaction, DropsValuesBelowThreshold) {
  const auto db = compact_database(sample_db(), 0.05);
  EXPECT_EQ(db.header.store_threshold, 0.05);
  EXPECT_EQ(db.entries[0].in(FeatureSpace::Motion), (SparseDistribution{{0, 0.7}, {1, 0.27}}));
  EXPECT_EQ(db.entries[0].in(FeatureSpace::Persistence), (SparseDistribution{{1, 0.98}}));
  EXPECT_TRUE(db.entries[1].in(FeatureSpace::Persistence).empty());
  EXPECT_THROW(compact_database(sample_db(), 1.0), ConfigError);
  EXPECT_EQ(compact_database(db, 0.01).header.store_threshold, 0.05) << "threshold never decreases";
}

TEST(Compaction, CompletionSpreadsDiscardedMass) {
  const auto p = complete_distribution({{0, 0.7}, {1, 0.27}}, 4);
  EXPECT_NEAR(p[0], 0.7, 1e-12);
  EXPECT_NEAR(p[1], 0.27, 1e-12);
  EXPECT_NEAR(p[2], 0.015, 1e-12);
  EXPECT_NEAR(p[3], 0.015, 1e-12);
  for (double v : complete_distribution({}, 5)) EXPECT_DOUBLE_EQ(v, 0.2);
  const auto full = complete_distribution({{0, 0.25}, {1, 0.25}}, 2);
  EXPECT_DOUBLE_EQ(full[0], 0.5);
  EXPECT_THROW(complete_distribution({{4, 1.0}}, 2), ConfigError);
}

TEST(Compaction, JunctionRatioAndQueryInvariance) {
  const auto& r = vtest::junction_run();
  const auto& full = r.index.full;
  const auto& compact = r.index.sections.front().db;
  const double ratio = static_cast<double>(database_text(compact).size()) / database_text(full).size();
  EXPECT_LE(ratio, 0.6);
  for (double tau : {0.05, 0.1, 0.3}) {
    for (auto s : kAllSpaces)
      for (int k = 0; k < full.num_topics(s); ++k) {
        const TopicRef t{s, k};
        ASSERT_EQ(results_json(search_single_topic(full, t, tau)), results_json(search_single_topic(compact, t, tau)))
            << to_string(t) << " tau " << tau;
      }
    const std::vector<TopicRef> pair{{FeatureSpace::Persistence, 0}, {FeatureSpace::Persistence, 1}};
    EXPECT_EQ(results_json(search_cooccurrence(full, pair, tau)), results_json(search_cooccurrence(compact, pair, tau)));
  }
  EXPECT_THROW(search_single_topic(compact, {FeatureSpace::Motion, 0}, 0.01), ConfigError);
}

TEST(Indexing, DistributionsAreNormalizedAndSeeded) {
  const auto& r = vtest::junction_run();
  for (const auto& e : r.index.full.entries)
    for (auto s : kAllSpaces) {
      const auto& d = e.in(s);
      if (d.empty()) continue;
      double sum = 0;
      for (const auto& tv : d) sum += tv.value;
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  EXPECT_NE(fold_in_seed({}, 3, FeatureSpace::Motion), fold_in_seed({}, 4, FeatureSpace::Motion));
  EXPECT_NE(fold_in_seed({}, 3, FeatureSpace::Motion), fold_in_seed({}, 3, FeatureSpace::Size));
}

TEST(Indexing, AbsentDocumentGivesEmptyDistribution) {
  const auto& r = vtest::junction_run();
  ModelSet ms{&*r.secondary[0], &*r.secondary[1], &*r.secondary[2]};
  ClipBundle b;
  b.clip_id = 0;
  b.frames = {0, 30};
  const auto entries = index_corpus(ms, std::vector{b});
  ASSERT_EQ(entries.size(), 1u);
  for (const auto& d : entries[0].spaces) EXPECT_TRUE(d.empty());
}

TEST(Indexing, RejectsGapsAndWrongModels) {
  const auto& r = vtest::junction_run();
  ModelSet ms{&*r.secondary[0], &*r.secondary[1], &*r.secondary[2]};
  ClipBundle a, b;
  a.clip_id = 0;
  b.clip_id = 2;
  EXPECT_THROW(index_corpus(ms, std::vector{a, b}), ConfigError);
  ModelSet swapped{&*r.secondary[1], nullptr, nullptr};
  EXPECT_THROW(index_corpus(swapped, std::vector{a}), ConfigError);
}

TEST(DatabaseStats, CountsNonZeroEntries) {
  const auto st = database_stats(sample_db());
  EXPECT_EQ(st.clips, 3u);
  EXPECT_EQ(st.bytes, database_text(sample_db()).size());
  EXPECT_NEAR(st.mean_nonzero_per_clip, (5 + 3 + 5) / 3.0, 1e-12);
}
