#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "vidtopic/pipeline.hpp"
#include "vidtopic/scenarios.hpp"

namespace vtest {

inline vidtopic::PipelineConfig junction_config() {
  return vidtopic::load_pipeline_config(std::string(VIDTOPIC_DATA_DIR) + "/junction.config.json");
}

// Built once per test binary.
inline const vidtopic::PipelineResult& junction_run() {
  static const vidtopic::PipelineResult r = vidtopic::build_pipeline(junction_config(), vidtopic::scenarios::junction());
  return r;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 gen(std::random_device{}());
    path = std::filesystem::temp_directory_path() / ("vidtopic_" + tag + "_" + std::to_string(gen()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str(const std::string& sub = {}) const { return (sub.empty() ? path : path / sub).string(); }
};

}  // namespace vtest
