#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"

#include "evoscen/learner.hpp"

namespace evoscen {

/// Everything a CLI run depends on besides seeds and input files.
struct RunConfig {
  std::string preset = "desk";
  TrainConfig train;
  std::map<Stage, int> stage_rounds;
  int simulate_rounds = 100;
  int simulate_bvs = 6;
  int jobs = 1;

  /// Training config for one stage, with td3.rounds taken from stage_rounds.
  TrainConfig stage_config(Stage stage) const;
  /// Throws ConfigError when an invariant is broken.
  void validate() const;
};

/// "desk" (reduced scale) or "paper" (full scale). Throws ConfigError otherwise.
RunConfig preset_config(const std::string& name);

/// Full snapshot; config_from_json(config_to_json(c)) == c field for field.
nlohmann::ordered_json config_to_json(const RunConfig& cfg);

/// Starts from the document's "preset" (default desk, or `preset` when
/// given) and overrides every key present. Unknown keys are errors.
RunConfig config_from_json(const nlohmann::ordered_json& doc, const std::optional<std::string>& preset = std::nullopt);
RunConfig load_config(const std::filesystem::path& path, const std::optional<std::string>& preset = std::nullopt);

}  // namespace evoscen
