#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "minigcn/model.hpp"
#include "minigcn/train.hpp"

namespace minigcn {

struct RunPaths {
  std::filesystem::path cube;
  std::filesystem::path labels;
  std::filesystem::path split;
  std::filesystem::path checkpoint;
  std::filesystem::path output;
};

/// Everything a command needs. `model.input_bands` and `model.classes` are
/// filled from the dataset when it is loaded.
struct RunConfig {
  ModelConfig model;
  TrainOptions train;
  RunPaths paths;
};

/// Default configuration as JSON, with sections model, train, graph, paths.
std::string default_run_config_json();

/// Layers defaults, then the JSON config file (if any), then `seed_env`
/// (the MGK_SEED value, if set), then `overrides` of the form
/// `section.key=value`. Unknown keys and type mismatches are ConfigErrors.
RunConfig resolve_run_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<std::string>& overrides,
                             const std::optional<std::string>& seed_env = std::nullopt);

/// The resolved configuration as JSON (same layout as the defaults).
std::string run_config_json(const RunConfig& cfg);

}  // namespace minigcn
