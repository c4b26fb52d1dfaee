#pragma once

#include "manga/config.hpp"
#include "manga/diffusion.hpp"

#include <filesystem>
#include <memory>

namespace manga {

/// On disk: manifest.json (config, step, seed, parameter names and shapes),
/// params.bin with every parameter as little-endian float32, row-major, in
/// manifest order, and adam_m.bin / adam_v.bin laid out the same way.
void save_checkpoint(const std::filesystem::path& dir, const PipelineConfig& cfg, const TrainState<float>& state);

struct Checkpoint {
    PipelineConfig config;
    std::unique_ptr<TrainState<float>> state;
};

/// Throws DataError if files are missing, truncated, or the parameter list
/// differs from what the stored config builds.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace manga
