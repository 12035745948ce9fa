#pragma once

#include <filesystem>
#include <string>

#include "cdnd/synth_data.hpp"
#include "cdnd/training.hpp"

namespace cdnd {

/// One run configuration file: text sections [train], [weights], [deform],
/// [shift], [data]. Unknown sections or keys are rejected with the offending
/// line number.
struct RunConfig {
  TrainConfig train;
  DomainShiftConfig shift;  // echoed for reproducibility records
  std::string dataset_dir;
  std::string source_domain = "clean";
  std::string target_domain = "shifted";
};

RunConfig parse_run_config_text(const std::string& text, const std::string& origin);
RunConfig parse_run_config_file(const std::filesystem::path& path);

/// Fully resolved echo of a configuration; parses back to an identical value.
std::string render_run_config(const RunConfig& config);

}  // namespace cdnd
