#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "quadembed/datagen.hpp"
#include "quadembed/training.hpp"

namespace qde {

struct DatasetSection {
  /// pendulum | lifted_pendulum | reactor | burgers2d
  std::string testbed = "lifted_pendulum";
  nlohmann::json params = nlohmann::json::object();
  bool normalize = true;
  /// Dataset file for train/baseline/rollout/eval, resolved against the config file.
  std::optional<std::filesystem::path> path;
};

struct BaselineSection {
  int r = 2;
  double reg = 1e-8;
};

/// On-disk run configuration. Unknown keys are rejected.
struct RunConfig {
  DatasetSection dataset;
  TrainingConfig training;
  BaselineSection baseline;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 42;
  /// Resolved document, used for the checkpoint echo.
  nlohmann::json document = nlohmann::json::object();
};

/// Applies "a.b.c=value"; value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Throws ConfigError on unknown keys or invalid values. Relative paths are
/// resolved against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);

/// Reads a JSON file (or starts from defaults when `file` is empty) and applies overrides.
RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          const std::vector<std::string>& overrides);

/// Runs the configured simulator.
SnapshotDataset generate_dataset(const DatasetSection& section);

/// Parameter echo without paths, stable across output locations.
nlohmann::json config_echo(const RunConfig& cfg);

}  // namespace qde
