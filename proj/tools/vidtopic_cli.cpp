// vidtopic: command-line front end for the indexing pipeline, search,
// evaluation and the HTTP service.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vidtopic/engine.hpp"
#include "vidtopic/eval.hpp"
#include "vidtopic/pipeline.hpp"
#include "vidtopic/scenarios.hpp"
#include "vidtopic/service.hpp"
#include "vidtopic/svg.hpp"
#include "vidtopic/sweep.hpp"

namespace fs = std::filesystem;
using namespace vidtopic;

namespace {

PipelineConfig resolve_config(const std::string& config_path, const std::string& dir = {}) {
  if (!config_path.empty()) return load_pipeline_config(config_path);
  if (!dir.empty() && fs::exists(fs::path(dir) / "config.json"))
    return load_pipeline_config((fs::path(dir) / "config.json").string());
  return PipelineConfig{};
}

Scenario resolve_scenario(const std::string& what) {
  if (fs::exists(what)) return scenario_from_json(parse_json(read_text_file(what), what));
  return scenarios::by_name(what);
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
    return;
  }
  write_text_file(out_path, text);
}

std::string diagnostic(const ParseError& e, const std::string& text) {
  std::string out = "error: " + std::string(e.what()) + "\n  " + text + "\n  ";
  out += std::string(std::min(e.position(), text.size()), ' ') + "^\n";
  return out;
}

void print_results(const std::vector<SearchResult>& results) {
  if (results.empty()) {
    std::cout << "no results\n";
    return;
  }
  std::printf("%-4s %-12s %-14s %10s  %s\n", "#", "clips", "frames", "score", "strategy");
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const std::string clips = std::to_string(r.start_clip) + "-" + std::to_string(r.end_clip);
    const std::string frames = std::to_string(r.start_frame) + "-" + std::to_string(r.end_frame);
    std::printf("%-4zu %-12s %-14s %10.4f  %s\n", i + 1, clips.c_str(), frames.c_str(), r.score, to_string(r.strategy));
  }
}

void print_stage_times(const PipelineResult& r) {
  std::fprintf(stderr, "simulate+ingest %.0f ms, train %.0f ms, refine %.0f ms, index %.0f ms (total %.0f ms)\n",
               r.stage_ms[0], r.stage_ms[1], r.stage_ms[2], r.stage_ms[3], r.stage_ms[4]);
}

void print_summary(const PipelineResult& r) {
  std::cout << r.data.clips.size() << " clips\n";
  for (auto s : kAllSpaces) {
    const auto& p = r.primary[space_index(s)];
    const auto& q = r.secondary[space_index(s)];
    std::cout << "  " << to_string(s) << ": ";
    if (!p) std::cout << "no content\n";
    else std::cout << p->num_topics() << " primary -> " << (q ? q->num_topics() : 0) << " secondary topics\n";
  }
}

GroundTruthLog catalog_ground_truth(const std::string& catalog_dir) {
  fs::path dir = catalog_dir;
  if (!fs::is_directory(dir)) dir = dir.parent_path();
  const auto file = dir / "ground_truth.json";
  if (!fs::exists(file)) throw NotFoundError("no ground_truth.json next to the catalog");
  return ground_truth_from_json(parse_json(read_text_file(file.string()), file.string()));
}

std::optional<EventKind> parse_event_kind(const std::string& s) {
  for (auto k : {EventKind::MotionTraverse, EventKind::Persistence, EventKind::CoOccurrence})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

// Stage-by-stage commands share the pipeline's directory layout.
PipelineResult load_stage_state(const std::string& dir, const PipelineConfig& cfg, bool need_secondary) {
  PipelineResult r;
  r.config = cfg;
  r.data = read_ingest_output(dir, &r.scene);
  r.config.scene = params_of(r.scene);
  r.primary = read_models(dir, ModelStage::Primary);
  if (need_secondary) r.secondary = read_models(dir, ModelStage::Secondary);
  if (fs::exists(fs::path(dir) / "scenario.json"))
    r.scenario = scenario_from_json(parse_json(read_text_file((fs::path(dir) / "scenario.json").string()), "scenario"));
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vidtopic: topic-model indexing and retrieval for scripted surveillance scenes"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "pipeline configuration (JSON)")->check(CLI::ExistingFile);
  app.fallthrough();

  std::string scenario_name = "junction", out_dir, frames_path, dir = ".", catalog_dir = ".", query_text, output;
  std::optional<std::uint64_t> seed;
  bool as_json = false;

  auto* simulate = app.add_subcommand("simulate", "render a scripted scene into cell-measurement frames");
  simulate->add_option("--scenario", scenario_name, "bundled scenario name or scenario JSON file");
  simulate->add_option("--out", out_dir, "output directory")->required();
  simulate->add_option("--seed", seed, "simulation seed (overrides the config)");

  auto* ingest = app.add_subcommand("ingest", "cut frames into clips and extract documents");
  ingest->add_option("--dir", dir, "working directory");
  ingest->add_option("--frames", frames_path, "frame file (default <dir>/frames.jsonl)");

  auto* train = app.add_subcommand("train", "train one primary topic model per feature space");
  train->add_option("--dir", dir, "working directory");

  auto* refine = app.add_subcommand("refine", "derive secondary (primitive) topic models");
  refine->add_option("--dir", dir, "working directory");

  auto* index = app.add_subcommand("index", "infer clip distributions and write database sections");
  index->add_option("--dir", dir, "working directory");

  auto* pipeline = app.add_subcommand("pipeline", "run simulate/ingest/train/refine/index in one go");
  pipeline->add_option("--scenario", scenario_name, "bundled scenario name or scenario JSON file");
  pipeline->add_option("--frames", frames_path, "index an existing frame file instead of simulating");
  pipeline->add_option("--out", out_dir, "output directory")->required();
  pipeline->add_option("--seed", seed, "simulation seed (overrides the config)");

  auto* search = app.add_subcommand("search", "run a query against a catalog");
  search->add_option("--catalog", catalog_dir, "catalog directory or catalog.json");
  search->add_option("--query,-q", query_text, "query text")->required();

  std::string sweep_list, event_kind = "motion-traverse", label;
  double iou = kDefaultIou;
  bool roc = false, stats_only = false;
  auto* eval = app.add_subcommand("eval", "score queries against ground truth, or sweep the clip length");
  eval->add_option("--catalog", catalog_dir, "catalog directory");
  eval->add_option("--query,-q", query_text, "query to score");
  eval->add_option("--events", event_kind, "ground-truth event kind (motion-traverse, persistence, co-occurrence)");
  eval->add_option("--label", label, "only events of agents with this label");
  eval->add_option("--iou", iou, "temporal IoU needed for a match");
  eval->add_flag("--roc", roc, "sweep the score threshold and report the ROC curve");
  eval->add_flag("--model-stats", stats_only, "report primary/secondary model statistics of a working directory");
  eval->add_option("--dir", dir, "working directory for --model-stats");
  eval->add_option("--sweep-clip-length", sweep_list, "comma-separated clip lengths; prints CSV of FP counts");
  eval->add_option("--scenario", scenario_name, "scenario for --sweep-clip-length");
  eval->add_option("--out", output, "write the report here instead of stdout");

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "serve the HTTP API");
  serve->add_option("--catalog", catalog_dir, "catalog directory");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port");

  std::string roc_file, sweep_file;
  auto* plot = app.add_subcommand("plot", "render an ROC report or sweep CSV as SVG");
  plot->add_option("--roc", roc_file, "ROC report written by eval --roc --json")->check(CLI::ExistingFile);
  plot->add_option("--sweep", sweep_file, "CSV written by eval --sweep-clip-length")->check(CLI::ExistingFile);
  plot->add_option("--out", output, "SVG output file")->required();

  auto* scenario_cmd = app.add_subcommand("scenario", "print a bundled scenario as JSON");
  scenario_cmd->add_option("--name", scenario_name, "scenario name");

  for (auto* sub : {eval, search}) sub->add_flag("--json", as_json, "machine-readable output");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*simulate) {
      auto cfg = resolve_config(config_path);
      if (seed) cfg.simulation_seed = *seed;
      const auto scenario = resolve_scenario(scenario_name);
      const auto scene = build_scene_config(cfg.scene);
      SceneSimulator sim(scene, scenario, cfg.simulation_seed);
      fs::create_directories(out_dir);
      write_text_file((fs::path(out_dir) / "config.json").string(), to_json(cfg).dump(2) + "\n");
      write_text_file((fs::path(out_dir) / "scenario.json").string(), to_json(scenario).dump() + "\n");
      write_text_file((fs::path(out_dir) / "ground_truth.json").string(), to_json(sim.ground_truth()).dump() + "\n");
      FrameFileWriter w((fs::path(out_dir) / "frames.jsonl").string(), scene);
      for (std::int64_t t = 0; t < sim.total_frames(); ++t) w.write(sim.frame(t));
      std::cout << "wrote " << sim.total_frames() << " frames to " << (fs::path(out_dir) / "frames.jsonl").string() << "\n";
      return 0;
    }
    if (*ingest) {
      const auto cfg = resolve_config(config_path, dir);
      const std::string path = frames_path.empty() ? (fs::path(dir) / "frames.jsonl").string() : frames_path;
      FrameFileReader reader(path);
      const auto scene = reader.config();
      const auto data = run_stage("ingest", [&] { return ingest_frames([&] { return reader.next(); }, scene, cfg.ingest); });
      ensure_dirs(dir);
      write_clip_manifest(dir, scene, data);
      for (auto s : kAllSpaces)
        write_corpus((fs::path(dir) / "corpus" / (std::string(to_string(s)) + ".jsonl")).string(), data.corpus(s));
      std::cout << data.clips.size() << " clips from " << data.frames_read << " frames\n";
      return 0;
    }
    if (*train) {
      const auto cfg = resolve_config(config_path, dir);
      auto r = load_stage_state(dir, cfg, false);
      r.primary = run_stage("train", [&] { return train_models(r.config, r.scene, r.data); });
      write_models(dir, r.primary, ModelStage::Primary);
      for (auto s : kAllSpaces)
        if (const auto& m = r.primary[space_index(s)])
          std::cout << to_string(s) << ": " << m->num_topics() << " topics\n";
      return 0;
    }
    if (*refine) {
      const auto cfg = resolve_config(config_path, dir);
      auto r = load_stage_state(dir, cfg, false);
      r.secondary = run_stage("refine", [&] { return refine_models(r.config, r.primary); });
      write_models(dir, r.secondary, ModelStage::Secondary);
      print_summary(r);
      return 0;
    }
    if (*index) {
      const auto cfg = resolve_config(config_path, dir);
      auto r = load_stage_state(dir, cfg, true);
      r.index = run_stage("index", [&] { return index_clips(r.config, r.scene, r.secondary, r.data); });
      const bool simulated = r.scenario.has_value();
      const std::string frames_file = fs::exists(fs::path(dir) / "frames.jsonl") ? "frames.jsonl" : "";
      if (!simulated && !frames_file.empty()) r.frames_path = (fs::absolute(dir) / frames_file).string();
      write_index(dir, make_catalog(r), r.index, simulated ? "scenario.json" : "", frames_file, pipeline_stats(r));
      std::cout << r.index.full.entries.size() << " clips indexed into " << r.index.sections.size() << " section(s)\n";
      return 0;
    }
    if (*pipeline) {
      auto cfg = resolve_config(config_path);
      if (seed) cfg.simulation_seed = *seed;
      const auto r = frames_path.empty() ? run_pipeline(cfg, resolve_scenario(scenario_name), out_dir)
                                         : run_pipeline_from_frames(cfg, frames_path, out_dir);
      print_summary(r);
      print_stage_times(r);
      return 0;
    }
    if (*search) {
      QuerySpec spec;
      try {
        spec = parse_query(query_text);
      } catch (const ParseError& e) {
        std::cerr << diagnostic(e, query_text);
        return 1;
      }
      const Catalog catalog = load_catalog(catalog_dir);
      const auto out = execute(catalog, spec);
      if (as_json) std::cout << results_json(out.results).dump() << "\n";
      else {
        print_results(out.results);
        std::fprintf(stderr, "%zu result(s) in %.2f ms\n", out.results.size(), out.elapsed_ms);
      }
      return 0;
    }
    if (*eval) {
      if (!sweep_list.empty()) {
        std::vector<int> lengths;
        std::stringstream ss(sweep_list);
        for (std::string item; std::getline(ss, item, ',');) {
          try {
            lengths.push_back(std::stoi(item));
          } catch (const std::exception&) {
            throw ConfigError("bad clip length '" + item + "'");
          }
        }
        const auto cfg = resolve_config(config_path);
        const auto points = clip_length_sweep(cfg, resolve_scenario(scenario_name),
                                              lengths, scenarios::route_strokes(scenarios::turn_route()),
                                              label.empty() ? "turn" : label, iou);
        emit(sweep_csv(points), output);
        return 0;
      }
      if (stats_only) {
        const auto primary = read_models(dir, ModelStage::Primary);
        const auto secondary = read_models(dir, ModelStage::Secondary);
        const double thr = resolve_config(config_path, dir).refinery.support_threshold;
        Json j = Json::object();
        for (auto s : kAllSpaces)
          if (primary[space_index(s)] && secondary[space_index(s)])
            j[to_string(s)] = to_json(model_stats(*primary[space_index(s)], *secondary[space_index(s)], thr));
        emit(j.dump(2) + "\n", output);
        return 0;
      }
      if (query_text.empty()) throw ConfigError("eval needs --query, --model-stats or --sweep-clip-length");
      const auto kind = parse_event_kind(event_kind);
      if (!kind) throw ConfigError("unknown event kind '" + event_kind + "'");
      QuerySpec spec;
      try {
        spec = parse_query(query_text);
      } catch (const ParseError& e) {
        std::cerr << diagnostic(e, query_text);
        return 1;
      }
      const Catalog catalog = load_catalog(catalog_dir);
      const auto events = catalog_ground_truth(catalog_dir).select(*kind, label);
      if (auto* seq = std::get_if<SequenceQuery>(&spec.strategy); seq && roc) {
        // Collect every positive-scoring alignment, then threshold.
        seq->params.score_threshold = 0.0;
      }
      const auto results = execute(catalog, spec).results;
      Json report = to_json(match_detections(results, events, iou));
      report["events"] = events.size();
      if (roc) report["roc"] = to_json(roc_auroc(results, events, threshold_grid(results), iou));
      emit(report.dump(as_json ? -1 : 2) + "\n", output);
      return 0;
    }
    if (*serve) {
      auto catalog = std::make_shared<const Catalog>(load_catalog(catalog_dir));
      Service service(catalog);
      std::cerr << "serving " << catalog->scene_id << " on http://" << host << ":" << port << "\n";
      if (!service.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
      return 0;
    }
    if (*plot) {
      if (roc_file.empty() == sweep_file.empty()) throw ConfigError("plot needs exactly one of --roc or --sweep");
      if (!roc_file.empty()) {
        const Json j = parse_json(read_text_file(roc_file), roc_file);
        const Json& r = j.contains("roc") ? j.at("roc") : j;
        RocCurve c;
        c.auroc = json_get<double>(r, "auroc");
        for (const auto& p : r.at("points")) {
          RocPoint pt;
          pt.threshold = json_get<double>(p, "threshold");
          pt.tp_rate = json_get<double>(p, "tp_rate");
          pt.fp_rate = json_get<double>(p, "fp_rate");
          c.points.push_back(pt);
        }
        write_text_file(output, svg::roc_chart(c));
      } else {
        std::vector<SweepPoint> points;
        std::stringstream ss(read_text_file(sweep_file));
        std::string line;
        std::getline(ss, line);
        while (std::getline(ss, line)) {
          if (line.empty()) continue;
          std::stringstream ls(line);
          std::vector<int> v;
          for (std::string item; std::getline(ls, item, ',');) v.push_back(std::stoi(item));
          if (v.size() != 5) throw FormatError("sweep CSV rows need 5 columns");
          SweepPoint p;
          p.frames_per_clip = v[0];
          p.experiment.report.true_positives = v[2];
          p.experiment.report.false_positives = v[3];
          p.experiment.report.false_negatives = v[4];
          points.push_back(p);
        }
        write_text_file(output, svg::sweep_chart(points));
      }
      return 0;
    }
    if (*scenario_cmd) {
      std::cout << to_json(scenarios::by_name(scenario_name)).dump(1) << "\n";
      return 0;
    }
  } catch (const StageError& e) {
    std::cerr << "error in stage " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
