#pragma once

#include <map>
#include <string>
#include <vector>

#include "pper/approx_ops.hpp"
#include "pper/dataio.hpp"
#include "pper/he_backend.hpp"
#include "pper/protocol.hpp"

namespace pper::config {

// Whole-application configuration: a sectioned INI file with typed scalars.
// Every CLI flag has a config-file equivalent; flags override file values.
struct AppConfig {
  he::HEParams he_params;
  approx::CompParams comp_params;
  protocol::PipelineConfig pipeline;
  dataio::GenConfig gen;

  std::string out_dir = "out";
  std::string d1_path;
  std::string d2_path;
  std::string truth_path;

  // Bench grid.
  std::vector<int> bench_chunk_sizes = {25, 50, 100};
  std::vector<protocol::Variant> bench_variants = {protocol::Variant::optimized};
  std::vector<protocol::EeqMode> bench_eeq_modes = {protocol::EeqMode::interactive};
  std::vector<bool> bench_parallel = {true};

  // Cross-field rules; throws ConfigError. The seed fans out from
  // pipeline.seed into the generator unless the generator pins its own.
  void validate() const;

  static AppConfig load(const std::string& path);
  static AppConfig from_ini_text(const std::string& text);
};

}  // namespace pper::config
