#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "snndec/deploy_sim.hpp"
#include "snndec/trainer.hpp"

namespace snndec {

/// Everything a command can be configured with. Files use a flat
/// `[section]` + `key = value` format; see docs/formats.md for the keys.
struct RunConfig {
  std::string preset = "paper_a";
  double bin_ms = 50.0;
  TrainConfig train;
  MachineModel machine;
  AnnReference ann;

  void validate() const;
};

std::vector<std::string> preset_names();
/// Throws ConfigError listing the known presets.
RunConfig preset(std::string_view name);

/// A top-level `preset = "..."` line picks the starting point, later keys override it.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Nested {section: {key: value}} with every known key.
nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Parses the key/value subset into {section: {key: value}}; top-level keys sit at the root.
nlohmann::json parse_kv(std::string_view text);

}  // namespace snndec
