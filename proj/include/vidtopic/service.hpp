#pragma once

// HTTP/JSON API over an immutable catalog snapshot.
//
//   GET  /api/scene            scene configuration and grid size
//   GET  /api/sections         database sections
//   GET  /api/topics?space=    secondary topics with supports and directions
//   POST /api/query            DSL text, {"query": text} or a structured query
//   POST /api/sketch/resolve   sketch -> ranked topics
//   GET  /api/clips/{id}       cell frames of one clip
//   GET  /api/stats            pipeline statistics

#include <memory>
#include <string>

#include "httplib.h"
#include "vidtopic/engine.hpp"
#include "vidtopic/error.hpp"
#include "vidtopic/formats.hpp"
#include "vidtopic/query.hpp"
#include "vidtopic/refinery.hpp"

namespace vidtopic {

inline Json error_json(const std::exception& e) {
  Json j{{"error", e.what()}};
  if (const auto* p = dynamic_cast<const ParseError*>(&e)) {
    j["kind"] = "parse";
    j["position"] = p->position();
    if (!p->missing_keyword().empty()) j["missing_keyword"] = p->missing_keyword();
  } else if (dynamic_cast<const NotFoundError*>(&e)) {
    j["kind"] = "not-found";
  } else if (dynamic_cast<const Error*>(&e)) {
    j["kind"] = "invalid";
  } else {
    j["kind"] = "internal";
  }
  return j;
}

inline int status_for(const std::exception& e) {
  if (dynamic_cast<const NotFoundError*>(&e)) return 404;
  if (dynamic_cast<const Error*>(&e) || dynamic_cast<const Json::exception*>(&e)) return 400;
  return 500;
}

// Accepts DSL text, {"query": "<DSL>"} or the structured JSON form.
inline QuerySpec query_from_body(const std::string& body) {
  const auto first = body.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && body[first] == '{') {
    Json j;
    try {
      j = Json::parse(body);
    } catch (const Json::exception& e) {
      throw ParseError(std::string("malformed JSON body: ") + e.what(), 0);
    }
    if (j.contains("query") && j.at("query").is_string()) return parse_query(j.at("query").get<std::string>());
    return query_from_json(j);
  }
  return parse_query(body);
}

inline Json topics_json(const Catalog& c, FeatureSpace s) {
  const auto* m = c.models[space_index(s)].get();
  if (!m) throw NotFoundError(std::string("no ") + to_string(s) + " model is loaded");
  Json topics = Json::array();
  for (const auto& t : m->topics) {
    Json support = Json::array();
    for (const auto& cell : topic_support(t, c.support_threshold, m->grid_w, m->grid_h))
      support.push_back({cell.x, cell.y});
    topics.push_back({{"id", t.id},
                      {"ref", to_string(TopicRef{s, t.id})},
                      {"direction", t.direction ? Json(to_string(*t.direction)) : Json(nullptr)},
                      {"mass", t.mass_hint},
                      {"source_topic", t.source_topic ? Json(*t.source_topic) : Json(nullptr)},
                      {"support", support}});
  }
  return Json{{"space", to_string(s)}, {"stage", to_string(m->stage)}, {"topics", topics}};
}

class Service {
 public:
  explicit Service(std::shared_ptr<const Catalog> catalog) : catalog_(std::move(catalog)) { routes(); }

  httplib::Server& server() { return server_; }

  bool listen(const std::string& host, int port) { return server_.listen(host, port); }
  int bind_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  std::shared_ptr<const Catalog> catalog_;
  httplib::Server server_;

  static void send(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(body.dump(), "application/json");
  }

  template <class F>
  static void guarded(httplib::Response& res, F&& f) {
    try {
      send(res, 200, f());
    } catch (const std::exception& e) {
      send(res, status_for(e), error_json(e));
    }
  }

  void routes() {
    const Catalog& c = *catalog_;
    server_.Get("/api/scene", [&c](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        return Json{{"scene_id", c.scene_id}, {"config", to_json(c.scene)},
                    {"grid", {{"w", c.scene.grid_w}, {"h", c.scene.grid_h}}}};
      });
    });
    server_.Get("/api/sections", [&c](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        Json a = Json::array();
        for (const auto& s : c.sections)
          a.push_back({{"scene", s.db.header.section.scene_id},
                       {"frames", {s.db.header.section.frames.begin, s.db.header.section.frames.end}},
                       {"clips", s.db.entries.size()},
                       {"store_threshold", s.db.header.store_threshold},
                       {"path", s.path}});
        return Json{{"sections", a}};
      });
    });
    server_.Get("/api/topics", [&c](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        if (!req.has_param("space")) throw ConfigError("missing query parameter 'space'");
        const auto name = req.get_param_value("space");
        const auto s = parse_space(name);
        if (!s) throw ConfigError("unknown feature space '" + name + "'");
        return topics_json(c, *s);
      });
    });
    server_.Post("/api/query", [&c](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto spec = query_from_body(req.body);
        const auto out = execute(c, spec);
        return Json{{"query", unparse(spec)},
                    {"spec", to_json(spec)},
                    {"results", results_json(out.results)},
                    {"elapsed_ms", out.elapsed_ms}};
      });
    });
    server_.Post("/api/sketch/resolve", [&c](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const Json j = parse_json(req.body, "sketch body");
        const auto sketch = sketch_from_json(j);
        const auto top_n = json_get_or<std::int64_t>(j, "top_n", 3);
        if (top_n < 1) throw ConfigError("top_n must be >= 1");
        auto out = to_json(sketch_to_topics(sketch, c.model_set(), static_cast<std::size_t>(top_n), c.support_threshold));
        out["sketch"] = to_json(sketch);
        return out;
      });
    });
    server_.Get(R"(/api/clips/(-?\d+))", [&c](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { return clip_json(c, std::stoll(req.matches[1].str())); });
    });
    server_.Get("/api/stats", [&c](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { return c.stats; });
    });
    server_.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.status = 204;
    });
    server_.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return;
      send(res, res.status, Json{{"error", "no such endpoint: " + req.method + " " + req.path}, {"kind", "not-found"}});
    });
  }
};

}  // namespace vidtopic
