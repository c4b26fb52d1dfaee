#pragma once

#include "manga/diffusion.hpp"
#include "manga/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace manga {

struct ScheduleConfig {
    int steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 2e-2;
    std::string kind = "linear";

    NoiseSchedule make() const { return make_schedule(steps, beta_start, beta_end, kind); }
};

struct TrainConfig {
    int batch_size = 8;
    int steps = 2000;
    int log_every = 100;
    int checkpoint_every = 0;  ///< 0: only at the end
};

struct DataConfig {
    int token_stride = 16;
    double coverage_threshold = 0.5;
    int caption_attempts = 3;
};

/// Everything a pipeline stage needs. Page size, K_max and the timestep
/// count appear in several sections and must agree.
struct PipelineConfig {
    int page_height = 64;
    int page_width = 48;
    int k_max = 4;
    std::uint64_t seed = 0;
    ModelConfig model;
    ScheduleConfig schedule;
    AdamWConfig optimizer;
    TrainConfig train;
    DataConfig data;

    /// Throws ConfigError naming the first disagreement.
    void validate(int codec_downsample = 8) const;
};

/// Parses JSON. Omitted fields keep their defaults; omitted model fields
/// derived from top-level values (k_max, latent size, timesteps) follow
/// them. Unknown keys are rejected.
PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::filesystem::path& file);
std::string config_to_json(const PipelineConfig& cfg, int indent = 2);

}  // namespace manga
