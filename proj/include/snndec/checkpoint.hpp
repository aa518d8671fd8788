#pragma once

#include <filesystem>
#include <string>

#include "snndec/config.hpp"
#include "snndec/trainer.hpp"

namespace snndec {

/// Training state: parameters, normalization statistics, optimizer moments,
/// RNG state and the data standardizers, so a run can resume exactly.
struct Checkpoint {
  RunConfig config;
  TrainableNetwork net;
  AdamW optimizer;
  Standardizer features;
  Standardizer velocities;
  std::size_t epochs_done = 0;
  std::string rng_state;  // textual std::mt19937_64 state
};

Checkpoint make_checkpoint(const RunConfig& config, const TrainingRun& run);

nlohmann::json standardizer_to_json(const Standardizer& s);
Standardizer standardizer_from_json(const nlohmann::json& j);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace snndec
