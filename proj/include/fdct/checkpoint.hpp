#pragma once

#include <filesystem>
#include <string>

#include "fdct/denoiser.hpp"
#include "fdct/schedule.hpp"

namespace fdct::model {

// Checkpoint directory: config.json (denoiser layout, schedule settings,
// parameter count and free-form training provenance) plus weights.pt.

inline constexpr const char* kCheckpointConfig = "config.json";
inline constexpr const char* kCheckpointWeights = "weights.pt";

void save_checkpoint(const Denoiser& denoiser, const diffusion::ScheduleSettings& schedule,
                     const std::string& provenance_json, const std::filesystem::path& dir);

struct LoadedCheckpoint {
    Denoiser denoiser;
    diffusion::ScheduleSettings schedule;
    std::string provenance_json;
};

/// Rebuilds the network from config.json and loads the weights. Any missing
/// tensor or shape disagreement raises CheckpointError.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace fdct::model
