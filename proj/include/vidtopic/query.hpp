#pragma once

// Query language: QUERY DOMAIN <spaces> SECTION <section> SEARCH TYPE
// <strategy>(<args>), plus sketch and example resolution. The grammar is
// written out in docs/query-language.md.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vidtopic/error.hpp"
#include "vidtopic/formats.hpp"
#include "vidtopic/index.hpp"
#include "vidtopic/ingest.hpp"
#include "vidtopic/lda.hpp"
#include "vidtopic/refinery.hpp"
#include "vidtopic/retrieval.hpp"

namespace vidtopic {

struct SectionSelector {
  std::string scene;
  std::optional<FrameInterval> range;  // half-open frame range
  friend bool operator==(const SectionSelector&, const SectionSelector&) = default;
};

struct SingleTopicQuery {
  TopicRef topic;
  double activation = kDefaultActivation;
  friend bool operator==(const SingleTopicQuery&, const SingleTopicQuery&) = default;
};

struct CoOccurrenceQuery {
  std::vector<TopicRef> topics;
  double activation = kDefaultActivation;
  friend bool operator==(const CoOccurrenceQuery&, const CoOccurrenceQuery&) = default;
};

struct SequenceQuery {
  std::vector<TopicRef> topics;
  AlignmentParams params;
  friend bool operator==(const SequenceQuery&, const SequenceQuery&) = default;
};

// Exactly one source: explicit distributions, an example frame range of the
// section's scene, or an inclusive range of database clip ids.
struct SimilarQuery {
  std::vector<SpaceDistributions> distributions;
  std::optional<FrameInterval> example_frames;
  std::optional<std::pair<std::int64_t, std::int64_t>> example_clips;
  std::size_t k = 5;
  friend bool operator==(const SimilarQuery&, const SimilarQuery&) = default;
};

using StrategyPayload = std::variant<SingleTopicQuery, CoOccurrenceQuery, SequenceQuery, SimilarQuery>;

struct QuerySpec {
  std::vector<FeatureSpace> spaces;  // non-empty, no duplicates, in written order
  SectionSelector section;
  StrategyPayload strategy;

  Strategy kind() const { return static_cast<Strategy>(strategy.index()); }
  friend bool operator==(const QuerySpec&, const QuerySpec&) = default;
};

// ---- parsing ---------------------------------------------------------------

namespace detail {

class QueryParser {
 public:
  explicit QueryParser(std::string_view text) : s_(text) {}

  QuerySpec parse() {
    QuerySpec q;
    expect_keywords({"QUERY", "DOMAIN"}, "QUERY DOMAIN");
    q.spaces = parse_spaces();
    expect_keywords({"SECTION"}, "SECTION");
    q.section = parse_section();
    expect_keywords({"SEARCH", "TYPE"}, "SEARCH TYPE");
    q.strategy = parse_strategy(q.spaces);
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected trailing text");
    return q;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& msg, std::optional<std::size_t> at = std::nullopt,
                         const std::string& keyword = {}) const {
    throw ParseError(msg, at.value_or(pos_), keyword);
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  static bool word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  }

  std::string_view peek_word() {
    skip_ws();
    std::size_t e = pos_;
    while (e < s_.size() && word_char(s_[e])) ++e;
    return s_.substr(pos_, e - pos_);
  }

  std::string_view take_word(const char* what) {
    auto w = peek_word();
    if (w.empty()) fail(std::string("expected ") + what);
    pos_ += w.size();
    return w;
  }

  static bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
             return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
           });
  }

  static bool is_keyword(std::string_view w) {
    for (auto k : {"QUERY", "DOMAIN", "SECTION", "SEARCH", "TYPE"})
      if (iequals(w, k)) return true;
    return false;
  }

  void expect_keywords(std::initializer_list<const char*> words, const std::string& name) {
    for (const char* k : words) {
      const std::size_t at = (skip_ws(), pos_);
      auto w = peek_word();
      if (!iequals(w, k)) {
        const std::string found = w.empty() ? (pos_ < s_.size() ? std::string(1, s_[pos_]) : "end of input")
                                            : "'" + std::string(w) + "'";
        fail("missing mandatory keyword " + name + " (found " + found + ")", at, name);
      }
      pos_ += w.size();
    }
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  std::vector<FeatureSpace> parse_spaces() {
    std::vector<FeatureSpace> out;
    do {
      const std::size_t at = (skip_ws(), pos_);
      auto w = peek_word();
      if (w.empty() || is_keyword(w)) fail("expected a feature space", at);
      pos_ += w.size();
      auto sp = parse_space(w);
      if (!sp) fail("unknown feature space '" + std::string(w) + "'", at);
      if (std::find(out.begin(), out.end(), *sp) != out.end())
        fail("feature space '" + std::string(w) + "' listed twice", at);
      out.push_back(*sp);
    } while (accept(','));
    return out;
  }

  std::int64_t parse_int(const char* what) {
    skip_ws();
    const std::size_t at = pos_;
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
    if (ec != std::errc{}) fail(std::string("expected ") + what, at);
    pos_ = static_cast<std::size_t>(p - s_.data());
    return v;
  }

  double parse_number(const char* what) {
    skip_ws();
    const std::size_t at = pos_;
    std::size_t e = pos_;
    while (e < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[e])) || s_[e] == '.' || s_[e] == '-' ||
                             s_[e] == '+'))
      ++e;
    const std::string tok(s_.substr(pos_, e - pos_));
    char* end = nullptr;
    const double v = tok.empty() ? 0.0 : std::strtod(tok.c_str(), &end);
    if (tok.empty() || end != tok.c_str() + tok.size() || !std::isfinite(v))
      fail(std::string("expected ") + what, at);
    pos_ = e;
    return v;
  }

  SectionSelector parse_section() {
    SectionSelector sel;
    const std::size_t at = (skip_ws(), pos_);
    std::size_t e = pos_;
    while (e < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[e])) || s_[e] == '_' || s_[e] == '-')) ++e;
    sel.scene = std::string(s_.substr(pos_, e - pos_));
    if (sel.scene.empty() || is_keyword(sel.scene)) fail("expected a section name", at);
    pos_ = e;
    if (pos_ < s_.size() && s_[pos_] == '[') {
      ++pos_;
      const auto b = parse_int("range start");
      expect(':');
      const auto f = parse_int("range end");
      expect(']');
      if (b < 0 || f <= b) fail("section range must satisfy 0 <= start < end", at);
      sel.range = FrameInterval{b, f};
    }
    return sel;
  }

  static std::string normalize_name(std::string_view w) {
    std::string out;
    for (char c : w)
      if (c != '-' && c != '_') out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
  }

  // [space ':'] 't' int, resolved against the domain.
  std::optional<TopicRef> try_topic_ref(const std::vector<FeatureSpace>& domain) {
    skip_ws();
    const std::size_t at = pos_;
    std::size_t e = pos_;
    std::optional<FeatureSpace> space;
    while (e < s_.size() && std::isalpha(static_cast<unsigned char>(s_[e]))) ++e;
    if (e < s_.size() && s_[e] == ':' && e > pos_) {
      space = parse_space(s_.substr(pos_, e - pos_));
      if (!space) fail("unknown feature space '" + std::string(s_.substr(pos_, e - pos_)) + "'", at);
      e += 1;
    } else {
      e = pos_;
    }
    if (e >= s_.size() || (s_[e] != 't' && s_[e] != 'T') || e + 1 >= s_.size() ||
        !std::isdigit(static_cast<unsigned char>(s_[e + 1]))) {
      if (space) fail("expected a topic reference like t3", e);
      return std::nullopt;
    }
    pos_ = e + 1;
    const auto idx = parse_int("topic index");
    if (pos_ < s_.size() && word_char(s_[pos_])) fail("malformed topic reference", at);
    if (!space) {
      if (domain.size() != 1) fail("topic reference needs a space prefix when the domain has several spaces", at);
      space = domain.front();
    } else if (std::find(domain.begin(), domain.end(), *space) == domain.end()) {
      fail(std::string("topic space ") + to_string(*space) + " is not in the query domain", at);
    }
    return TopicRef{*space, static_cast<std::int32_t>(idx)};
  }

  std::vector<double> parse_vector() {
    expect('[');
    std::vector<double> v;
    if (!accept(']')) {
      do v.push_back(parse_number("a probability"));
      while (accept(','));
      expect(']');
    }
    return v;
  }

  // {m=[...] p=[...]} separated by ';' or whitespace.
  SpaceDistributions parse_distribution(const std::vector<FeatureSpace>& domain) {
    SpaceDistributions d;
    expect('{');
    while (!accept('}')) {
      accept(';');
      if (accept('}')) break;
      const std::size_t at = (skip_ws(), pos_);
      auto w = take_word("a feature space");
      auto sp = parse_space(w);
      if (!sp) fail("unknown feature space '" + std::string(w) + "'", at);
      if (std::find(domain.begin(), domain.end(), *sp) == domain.end())
        fail(std::string("space ") + to_string(*sp) + " is not in the query domain", at);
      expect('=');
      d[space_index(*sp)] = parse_vector();
    }
    return d;
  }

  bool parse_bool() {
    const std::size_t at = (skip_ws(), pos_);
    auto w = take_word("true or false");
    if (iequals(w, "true") || w == "1") return true;
    if (iequals(w, "false") || w == "0") return false;
    fail("expected true or false", at);
  }

  std::pair<std::int64_t, std::int64_t> parse_range(const char* what) {
    const auto a = parse_int(what);
    skip_ws();
    if (s_.substr(pos_, 2) != "..") fail("expected '..' in range");
    pos_ += 2;
    const auto b = parse_int(what);
    return {a, b};
  }

  StrategyPayload parse_strategy(const std::vector<FeatureSpace>& domain) {
    const std::size_t name_at = (skip_ws(), pos_);
    auto w = peek_word();
    if (w.empty()) fail("expected a search strategy", name_at);
    pos_ += w.size();
    const auto name = normalize_name(w);
    int kind = -1;
    if (name == "singletopic" || name == "single") kind = 0;
    else if (name == "cooccurrence") kind = 1;
    else if (name == "topicsequence" || name == "sequence") kind = 2;
    else if (name == "similarclips" || name == "similar") kind = 3;
    if (kind < 0) fail("unknown search strategy '" + std::string(w) + "'", name_at);
    expect('(');

    std::vector<TopicRef> refs;
    std::vector<SpaceDistributions> dists;
    std::optional<double> active, match, mismatch, gap, min_score;
    std::optional<bool> soft;
    std::optional<std::int64_t> k;
    std::optional<FrameInterval> example;
    std::optional<std::pair<std::int64_t, std::int64_t>> clips;
    std::set<std::string> seen;

    if (!accept(')')) {
      do {
        skip_ws();
        const std::size_t at = pos_;
        if (pos_ < s_.size() && s_[pos_] == '{') {
          if (kind != 3) fail("distributions are only valid for similar-clips", at);
          dists.push_back(parse_distribution(domain));
          continue;
        }
        if (auto r = try_topic_ref(domain)) {
          if (kind == 3) fail("similar-clips takes distributions or an example, not topics", at);
          refs.push_back(*r);
          continue;
        }
        auto key_word = take_word("an argument");
        const auto key = normalize_name(key_word);
        expect('=');
        if (!seen.insert(key).second) fail("option '" + key + "' given twice", at);
        auto only = [&](std::initializer_list<int> kinds) {
          if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end())
            fail("option '" + key + "' is not valid for this strategy", at);
        };
        if (key == "active") {
          only({0, 1, 2});
          active = parse_number("a threshold");
        } else if (key == "match") {
          only({2});
          match = parse_number("a reward");
        } else if (key == "mismatch") {
          only({2});
          mismatch = parse_number("a penalty");
        } else if (key == "gap") {
          only({2});
          gap = parse_number("a penalty");
        } else if (key == "minscore") {
          only({2});
          min_score = parse_number("a score threshold");
        } else if (key == "soft") {
          only({2});
          soft = parse_bool();
        } else if (key == "k") {
          only({3});
          k = parse_int("k");
        } else if (key == "example") {
          only({3});
          auto [a, b] = parse_range("frame index");
          if (a < 0 || b <= a) fail("example range must satisfy 0 <= start < end", at);
          example = FrameInterval{a, b};
        } else if (key == "clips") {
          only({3});
          auto [a, b] = parse_range("clip id");
          if (a < 0 || b < a) fail("clip range must satisfy 0 <= first <= last", at);
          clips = std::pair{a, b};
        } else {
          fail("unknown option '" + std::string(key_word) + "'", at);
        }
      } while (accept(','));
      expect(')');
    }

    for (const auto& r : refs)
      if (r.topic < 0) fail("topic index must be >= 0", name_at);
    if (active && !(*active >= 0.0)) fail("active threshold must be >= 0", name_at);
    switch (kind) {
      case 0: {
        if (refs.size() != 1) fail("single-topic takes exactly one topic", name_at);
        return SingleTopicQuery{refs[0], active.value_or(kDefaultActivation)};
      }
      case 1: {
        if (refs.size() < 2) fail("co-occurrence takes at least two topics", name_at);
        return CoOccurrenceQuery{refs, active.value_or(kDefaultActivation)};
      }
      case 2: {
        if (refs.empty()) fail("topic-sequence takes at least one topic", name_at);
        SequenceQuery q{refs, {}};
        if (match) q.params.match_reward = *match;
        if (mismatch) q.params.mismatch_penalty = *mismatch;
        if (gap) q.params.gap_penalty = *gap;
        q.params.score_threshold = min_score;
        if (active) q.params.activation_threshold = *active;
        if (soft) q.params.soft_match = *soft;
        try {
          validate_alignment_params(q.params);
        } catch (const ConfigError& e) {
          fail(e.what(), name_at);
        }
        return q;
      }
      default: {
        SimilarQuery q;
        q.distributions = std::move(dists);
        q.example_frames = example;
        q.example_clips = clips;
        const int sources = (!q.distributions.empty()) + example.has_value() + clips.has_value();
        if (sources != 1) fail("similar-clips takes exactly one of: distributions, example=a..b, clips=a..b", name_at);
        if (k) {
          if (*k < 1) fail("k must be >= 1", name_at);
          q.k = static_cast<std::size_t>(*k);
        }
        for (const auto& d : q.distributions)
          for (auto s : domain)
            if (!d[space_index(s)])
              fail(std::string("distribution lacks the ") + to_string(s) + " space of the domain", name_at);
        return q;
      }
    }
  }
};

inline std::string format_number(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace detail

inline QuerySpec parse_query(std::string_view text) { return detail::QueryParser(text).parse(); }

inline std::string unparse(const QuerySpec& q) {
  using detail::format_number;
  std::string out = "QUERY DOMAIN ";
  for (std::size_t i = 0; i < q.spaces.size(); ++i) out += (i ? "," : "") + std::string(to_string(q.spaces[i]));
  out += " SECTION " + q.section.scene;
  if (q.section.range)
    out += "[" + std::to_string(q.section.range->begin) + ":" + std::to_string(q.section.range->end) + "]";
  out += " SEARCH TYPE ";
  out += to_string(q.kind());
  out += "(";
  std::vector<std::string> args;
  auto refs = [&](const std::vector<TopicRef>& rs) {
    for (const auto& r : rs) args.push_back(to_string(r));
  };
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SingleTopicQuery>) {
          refs({s.topic});
          args.push_back("active=" + format_number(s.activation));
        } else if constexpr (std::is_same_v<T, CoOccurrenceQuery>) {
          refs(s.topics);
          args.push_back("active=" + format_number(s.activation));
        } else if constexpr (std::is_same_v<T, SequenceQuery>) {
          refs(s.topics);
          args.push_back("match=" + format_number(s.params.match_reward));
          args.push_back("mismatch=" + format_number(s.params.mismatch_penalty));
          args.push_back("gap=" + format_number(s.params.gap_penalty));
          if (s.params.score_threshold) args.push_back("min_score=" + format_number(*s.params.score_threshold));
          args.push_back("active=" + format_number(s.params.activation_threshold));
          args.push_back(std::string("soft=") + (s.params.soft_match ? "true" : "false"));
        } else {
          for (const auto& d : s.distributions) {
            std::string t = "{";
            bool first = true;
            for (auto sp : kAllSpaces) {
              if (!d[space_index(sp)]) continue;
              t += (first ? "" : "; ") + std::string(1, space_prefix(sp)) + "=[";
              first = false;
              const auto& v = *d[space_index(sp)];
              for (std::size_t i = 0; i < v.size(); ++i) t += (i ? "," : "") + format_number(v[i]);
              t += "]";
            }
            args.push_back(t + "}");
          }
          if (s.example_frames)
            args.push_back("example=" + std::to_string(s.example_frames->begin) + ".." +
                           std::to_string(s.example_frames->end));
          if (s.example_clips)
            args.push_back("clips=" + std::to_string(s.example_clips->first) + ".." +
                           std::to_string(s.example_clips->second));
          args.push_back("k=" + std::to_string(s.k));
        }
      },
      q.strategy);
  for (std::size_t i = 0; i < args.size(); ++i) out += (i ? "," : "") + args[i];
  return out + ")";
}

// ---- structured JSON form --------------------------------------------------

inline TopicRef topic_ref_from_json(const Json& j, const std::vector<FeatureSpace>& domain) {
  if (j.is_string()) {
    const std::string text = j.get<std::string>();
    // Reuse the DSL rules by parsing a one-topic query.
    std::string dom;
    for (std::size_t i = 0; i < domain.size(); ++i) dom += (i ? "," : "") + std::string(to_string(domain[i]));
    try {
      auto q = parse_query("QUERY DOMAIN " + dom + " SECTION x SEARCH TYPE single-topic(" + text + ")");
      return std::get<SingleTopicQuery>(q.strategy).topic;
    } catch (const ParseError& e) {
      throw ParseError("bad topic reference '" + text + "'", 0);
    }
  }
  if (!j.is_object()) throw ParseError("topic reference must be a string or object", 0);
  const auto s = parse_space(json_get<std::string>(j, "space"));
  if (!s) throw ParseError("unknown feature space in topic reference", 0);
  return TopicRef{*s, json_get<std::int32_t>(j, "topic")};
}

inline Json to_json(const QuerySpec& q) {
  Json j;
  j["domain"] = Json::array();
  for (auto s : q.spaces) j["domain"].push_back(to_string(s));
  j["section"] = Json{{"scene", q.section.scene}};
  if (q.section.range) j["section"]["range"] = {q.section.range->begin, q.section.range->end};
  Json st;
  st["type"] = to_string(q.kind());
  auto refs = [](const std::vector<TopicRef>& rs) {
    Json a = Json::array();
    for (const auto& r : rs) a.push_back(to_string(r));
    return a;
  };
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SingleTopicQuery>) {
          st["topic"] = to_string(s.topic);
          st["active"] = s.activation;
        } else if constexpr (std::is_same_v<T, CoOccurrenceQuery>) {
          st["topics"] = refs(s.topics);
          st["active"] = s.activation;
        } else if constexpr (std::is_same_v<T, SequenceQuery>) {
          st["topics"] = refs(s.topics);
          st["match"] = s.params.match_reward;
          st["mismatch"] = s.params.mismatch_penalty;
          st["gap"] = s.params.gap_penalty;
          if (s.params.score_threshold) st["min_score"] = *s.params.score_threshold;
          st["active"] = s.params.activation_threshold;
          st["soft"] = s.params.soft_match;
        } else {
          st["k"] = s.k;
          if (!s.distributions.empty()) {
            Json ds = Json::array();
            for (const auto& d : s.distributions) {
              Json o = Json::object();
              for (auto sp : kAllSpaces)
                if (d[space_index(sp)]) o[to_string(sp)] = *d[space_index(sp)];
              ds.push_back(o);
            }
            st["distributions"] = ds;
          }
          if (s.example_frames) st["example"] = {s.example_frames->begin, s.example_frames->end};
          if (s.example_clips) st["clips"] = {s.example_clips->first, s.example_clips->second};
        }
      },
      q.strategy);
  j["strategy"] = st;
  return j;
}

// Builds the equivalent DSL text and parses it, so both forms share one set
// of validation rules.
inline QuerySpec query_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("query must be a JSON object", 0);
  for (const char* key : {"domain", "section", "strategy"})
    if (!j.contains(key)) throw ParseError(std::string("query JSON lacks '") + key + "'", 0, key);
  QuerySpec q;
  try {
    const auto& dom = j.at("domain");
    std::vector<std::string> names;
    if (dom.is_string()) names.push_back(dom.get<std::string>());
    else for (const auto& d : dom) names.push_back(d.get<std::string>());
    if (names.empty()) throw ParseError("domain must list at least one feature space", 0);
    for (const auto& n : names) {
      auto s = parse_space(n);
      if (!s) throw ParseError("unknown feature space '" + n + "'", 0);
      if (std::find(q.spaces.begin(), q.spaces.end(), *s) != q.spaces.end())
        throw ParseError("feature space '" + n + "' listed twice", 0);
      q.spaces.push_back(*s);
    }
    const auto& sec = j.at("section");
    if (sec.is_string()) {
      q.section.scene = sec.get<std::string>();
    } else {
      q.section.scene = json_get<std::string>(sec, "scene");
      if (sec.contains("range") && !sec.at("range").is_null()) {
        const auto& r = sec.at("range");
        q.section.range = FrameInterval{r.at(0).get<std::int64_t>(), r.at(1).get<std::int64_t>()};
      }
    }
    const auto& st = j.at("strategy");
    const std::string type = json_get<std::string>(st, "type");
    std::vector<TopicRef> refs;
    if (st.contains("topic")) refs.push_back(topic_ref_from_json(st.at("topic"), q.spaces));
    if (st.contains("topics"))
      for (const auto& r : st.at("topics")) refs.push_back(topic_ref_from_json(r, q.spaces));
    const double active = json_get_or<double>(st, "active", kDefaultActivation);
    const std::string norm = [&] {
      std::string n;
      for (char c : type)
        if (c != '-' && c != '_') n.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      return n;
    }();
    if (norm == "singletopic") {
      if (refs.size() != 1) throw ParseError("single-topic takes exactly one topic", 0);
      q.strategy = SingleTopicQuery{refs[0], active};
    } else if (norm == "cooccurrence") {
      if (refs.size() < 2) throw ParseError("co-occurrence takes at least two topics", 0);
      q.strategy = CoOccurrenceQuery{refs, active};
    } else if (norm == "topicsequence") {
      if (refs.empty()) throw ParseError("topic-sequence takes at least one topic", 0);
      SequenceQuery s{refs, {}};
      s.params.match_reward = json_get_or<double>(st, "match", 2.0);
      s.params.mismatch_penalty = json_get_or<double>(st, "mismatch", 1.0);
      s.params.gap_penalty = json_get_or<double>(st, "gap", 1.0);
      if (st.contains("min_score") && !st.at("min_score").is_null())
        s.params.score_threshold = st.at("min_score").get<double>();
      s.params.activation_threshold = active;
      s.params.soft_match = json_get_or<bool>(st, "soft", false);
      q.strategy = s;
    } else if (norm == "similarclips") {
      SimilarQuery s;
      const auto k = json_get_or<std::int64_t>(st, "k", 5);
      if (k < 1) throw ParseError("k must be >= 1", 0);
      s.k = static_cast<std::size_t>(k);
      if (st.contains("distributions"))
        for (const auto& d : st.at("distributions")) {
          SpaceDistributions sd;
          for (auto it = d.begin(); it != d.end(); ++it) {
            auto sp = parse_space(it.key());
            if (!sp) throw ParseError("unknown feature space '" + it.key() + "'", 0);
            sd[space_index(*sp)] = it.value().get<std::vector<double>>();
          }
          s.distributions.push_back(sd);
        }
      if (st.contains("example")) {
        const auto& r = st.at("example");
        s.example_frames = FrameInterval{r.at(0).get<std::int64_t>(), r.at(1).get<std::int64_t>()};
      }
      if (st.contains("clips")) {
        const auto& r = st.at("clips");
        s.example_clips = std::pair{r.at(0).get<std::int64_t>(), r.at(1).get<std::int64_t>()};
      }
      q.strategy = s;
    } else {
      throw ParseError("unknown search strategy '" + type + "'", 0);
    }
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(std::string("malformed query JSON: ") + e.what(), 0);
  }
  // Round-trip through the text form to apply the remaining checks.
  return parse_query(unparse(q));
}

// ---- sketches --------------------------------------------------------------

struct SketchStroke {
  std::vector<Cell> points;  // cell coordinates, at least two
  FeatureSpace space = FeatureSpace::Motion;
  friend bool operator==(const SketchStroke&, const SketchStroke&) = default;
};

struct SketchRegion {
  std::vector<Cell> cells;
  FeatureSpace space = FeatureSpace::Persistence;
  friend bool operator==(const SketchRegion&, const SketchRegion&) = default;
};

struct SketchQuery {
  std::vector<SketchStroke> strokes;
  std::vector<SketchRegion> regions;
  friend bool operator==(const SketchQuery&, const SketchQuery&) = default;
};

struct RankedTopic {
  TopicRef topic;
  double score = 0.0;
  friend bool operator==(const RankedTopic&, const RankedTopic&) = default;
};

struct SketchResolution {
  std::vector<std::vector<RankedTopic>> strokes;
  std::vector<std::vector<RankedTopic>> regions;
};

struct DirectedCell {
  Cell cell;
  Direction direction = Direction::E;
  friend constexpr auto operator<=>(const DirectedCell&, const DirectedCell&) = default;
};

inline std::vector<Cell> rasterize_segment(Cell a, Cell b) {
  std::vector<Cell> out;
  int x = a.x, y = a.y;
  const int dx = std::abs(b.x - a.x), sx = a.x < b.x ? 1 : -1;
  const int dy = -std::abs(b.y - a.y), sy = a.y < b.y ? 1 : -1;
  int err = dx + dy;
  while (true) {
    out.push_back({x, y});
    if (x == b.x && y == b.y) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y += sy;
    }
  }
  return out;
}

// Cells under the stroke, each tagged with the direction of the segment
// drawn over it. Image y grows downwards, as for flow vectors.
inline std::vector<DirectedCell> rasterize_stroke(const SketchStroke& s) {
  std::set<DirectedCell> cells;
  for (std::size_t i = 0; i + 1 < s.points.size(); ++i) {
    const Cell a = s.points[i], b = s.points[i + 1];
    const auto dir = quantize_direction(b.x - a.x, b.y - a.y, 0.0);
    if (!dir) continue;
    for (const auto& c : rasterize_segment(a, b)) cells.insert({c, *dir});
  }
  return {cells.begin(), cells.end()};
}

inline void validate_sketch(const SketchQuery& q, int grid_w, int grid_h) {
  auto inside = [&](const Cell& c) { return c.x >= 0 && c.y >= 0 && c.x < grid_w && c.y < grid_h; };
  for (std::size_t i = 0; i < q.strokes.size(); ++i) {
    if (q.strokes[i].points.size() < 2) throw ConfigError("stroke " + std::to_string(i) + " has fewer than 2 points");
    for (const auto& c : q.strokes[i].points)
      if (!inside(c)) throw ConfigError("stroke " + std::to_string(i) + " leaves the grid");
  }
  for (std::size_t i = 0; i < q.regions.size(); ++i) {
    if (q.regions[i].cells.empty()) throw ConfigError("region " + std::to_string(i) + " is empty");
    for (const auto& c : q.regions[i].cells)
      if (!inside(c)) throw ConfigError("region " + std::to_string(i) + " leaves the grid");
  }
}

namespace detail {

inline std::vector<RankedTopic> top_ranked(std::vector<RankedTopic> r, std::size_t top_n) {
  std::stable_sort(r.begin(), r.end(), [](const RankedTopic& a, const RankedTopic& b) { return a.score > b.score; });
  if (r.size() > top_n) r.resize(top_n);
  return r;
}

}  // namespace detail

// Motion strokes prefer topics whose support matches both the drawn cells
// and the drawn directions; regions compare supports alone.
inline SketchResolution sketch_to_topics(const SketchQuery& q, const ModelSet& models, std::size_t top_n = 3,
                                         double support_threshold = 0.1) {
  if (top_n < 1) throw ConfigError("top_n must be >= 1");
  const TopicModel* any = nullptr;
  for (auto* m : models)
    if (m) {
      if (m->stage != ModelStage::Secondary) throw ConfigError("sketch resolution needs secondary models");
      any = m;
    }
  if (!any) throw ConfigError("no models to resolve the sketch against");
  validate_sketch(q, any->grid_w, any->grid_h);

  SketchResolution out;
  for (const auto& stroke : q.strokes) {
    std::vector<RankedTopic> ranked;
    const TopicModel* m = models[space_index(stroke.space)];
    const auto cells = rasterize_stroke(stroke);
    std::vector<Cell> plain;
    for (const auto& dc : cells) plain.push_back(dc.cell);
    std::sort(plain.begin(), plain.end());
    plain.erase(std::unique(plain.begin(), plain.end()), plain.end());
    if (m && !plain.empty()) {
      for (const auto& t : m->topics) {
        const auto support = topic_support(t, support_threshold, m->grid_w, m->grid_h);
        double score = 0.0;
        if (stroke.space == FeatureSpace::Motion && t.direction) {
          std::vector<Cell> matching;
          for (const auto& dc : cells)
            if (dc.direction == *t.direction) matching.push_back(dc.cell);
          std::sort(matching.begin(), matching.end());
          matching.erase(std::unique(matching.begin(), matching.end()), matching.end());
          std::vector<Cell> inter, uni;
          std::set_intersection(matching.begin(), matching.end(), support.begin(), support.end(),
                                std::back_inserter(inter));
          std::set_union(plain.begin(), plain.end(), support.begin(), support.end(), std::back_inserter(uni));
          score = uni.empty() ? 0.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
        } else {
          score = overlap_score(plain, support);
        }
        if (score > 0.0) ranked.push_back({TopicRef{stroke.space, t.id}, score});
      }
    }
    out.strokes.push_back(detail::top_ranked(std::move(ranked), top_n));
  }
  for (const auto& region : q.regions) {
    std::vector<RankedTopic> ranked;
    const TopicModel* m = models[space_index(region.space)];
    std::vector<Cell> cells = region.cells;
    std::sort(cells.begin(), cells.end());
    cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
    if (m) {
      for (const auto& t : m->topics) {
        const double score = overlap_score(cells, topic_support(t, support_threshold, m->grid_w, m->grid_h));
        if (score > 0.0) ranked.push_back({TopicRef{region.space, t.id}, score});
      }
    }
    out.regions.push_back(detail::top_ranked(std::move(ranked), top_n));
  }
  return out;
}

inline SketchQuery sketch_from_json(const Json& j) {
  SketchQuery q;
  auto cell = [](const Json& c) {
    if (c.is_array()) return Cell{c.at(0).get<int>(), c.at(1).get<int>()};
    return Cell{c.at("x").get<int>(), c.at("y").get<int>()};
  };
  auto space_of = [](const Json& o, FeatureSpace fallback) {
    if (!o.contains("space")) return fallback;
    auto s = parse_space(o.at("space").get<std::string>());
    if (!s) throw ConfigError("unknown feature space in sketch");
    return *s;
  };
  try {
    if (j.contains("strokes"))
      for (const auto& s : j.at("strokes")) {
        SketchStroke st;
        st.space = space_of(s, FeatureSpace::Motion);
        for (const auto& p : s.at("points")) st.points.push_back(cell(p));
        q.strokes.push_back(std::move(st));
      }
    if (j.contains("regions"))
      for (const auto& r : j.at("regions")) {
        SketchRegion rg;
        rg.space = space_of(r, FeatureSpace::Persistence);
        for (const auto& c : r.at("cells")) rg.cells.push_back(cell(c));
        q.regions.push_back(std::move(rg));
      }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed sketch JSON: ") + e.what());
  }
  return q;
}

inline Json to_json(const SketchQuery& q) {
  Json j{{"strokes", Json::array()}, {"regions", Json::array()}};
  for (const auto& s : q.strokes) {
    Json pts = Json::array();
    Json dirs = Json::array();
    for (const auto& p : s.points) pts.push_back({p.x, p.y});
    for (std::size_t i = 0; i + 1 < s.points.size(); ++i) {
      const auto d = quantize_direction(s.points[i + 1].x - s.points[i].x, s.points[i + 1].y - s.points[i].y, 0.0);
      dirs.push_back(d ? Json(to_string(*d)) : Json(nullptr));
    }
    j["strokes"].push_back({{"space", to_string(s.space)}, {"points", pts}, {"directions", dirs}});
  }
  for (const auto& r : q.regions) {
    Json cells = Json::array();
    for (const auto& c : r.cells) cells.push_back({c.x, c.y});
    j["regions"].push_back({{"space", to_string(r.space)}, {"cells", cells}});
  }
  return j;
}

inline Json to_json(const SketchResolution& r) {
  auto list = [](const std::vector<std::vector<RankedTopic>>& v) {
    Json a = Json::array();
    for (const auto& ranked : v) {
      Json e = Json::array();
      for (const auto& t : ranked) e.push_back({{"topic", to_string(t.topic)}, {"score", t.score}});
      a.push_back(e);
    }
    return a;
  };
  return Json{{"strokes", list(r.strokes)}, {"regions", list(r.regions)}};
}

// ---- query by example ------------------------------------------------------

// Splits the example into whole clips of length F (a trailing partial clip
// is dropped) and infers each clip in every modelled space. A clip with no
// content in a space gets the uniform distribution, which is also what an
// empty database entry completes to.
inline std::vector<SpaceDistributions> example_to_distribution(std::span<const CellMeasurementFrame> frames,
                                                               const SceneConfig& cfg, const ModelSet& models,
                                                               const IngestParams& ingest = {},
                                                               const FoldInParams& fold_in = {}) {
  if (static_cast<std::int64_t>(frames.size()) < cfg.frames_per_clip)
    throw ConfigError("example has " + std::to_string(frames.size()) + " frames, shorter than one clip (" +
                      std::to_string(cfg.frames_per_clip) + ")");
  std::vector<SpaceDistributions> out;
  const std::size_t F = static_cast<std::size_t>(cfg.frames_per_clip);
  for (std::size_t b = 0; b + F <= frames.size(); b += F) {
    const auto docs = extract_clip_documents(frames.subspan(b, F), cfg, ingest);
    SpaceDistributions d;
    for (auto s : kAllSpaces) {
      const TopicModel* m = models[space_index(s)];
      if (!m) continue;
      const auto& doc = docs[space_index(s)];
      d[space_index(s)] = infer_distribution(*m, doc, fold_in.iterations, fold_in_seed(fold_in, doc.clip_id, s));
    }
    out.push_back(std::move(d));
  }
  return out;
}

// The database's own (completed) distributions for an inclusive clip range.
inline std::vector<SpaceDistributions> entries_to_distribution(const Database& db, std::int64_t first,
                                                               std::int64_t last) {
  if (db.entries.empty()) throw NotFoundError("section is empty");
  const std::int64_t base = db.entries.front().clip_id;
  if (first > last || first < base || last >= base + static_cast<std::int64_t>(db.entries.size()))
    throw NotFoundError("clip range " + std::to_string(first) + ".." + std::to_string(last) +
                        " lies outside the section");
  std::vector<SpaceDistributions> out;
  for (std::int64_t c = first; c <= last; ++c) {
    const auto& e = db.entries[static_cast<std::size_t>(c - base)];
    SpaceDistributions d;
    for (auto s : kAllSpaces)
      if (db.num_topics(s) > 0) d[space_index(s)] = complete_distribution(e.in(s), db.num_topics(s));
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace vidtopic
