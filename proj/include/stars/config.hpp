#pragma once

#include <filesystem>
#include <string>

#include "stars/model.hpp"
#include "stars/trainer.hpp"

namespace stars {

// One resolved view of everything a run needs. Loaded from a plain-text
// key-value file with [model] / [train] / [loss] sections; command-line flags
// override file values; the canonical echo reproduces the resolved state.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  void validate() const;
};

RunConfig parse_run_config(const std::string& text, const std::string& origin);
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical text form: every key, fixed order, values printed so that parsing
// the echo reproduces the configuration exactly.
std::string echo_run_config(const RunConfig& config);

}  // namespace stars
