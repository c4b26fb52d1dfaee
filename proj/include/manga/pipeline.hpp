#pragma once

#include "manga/checkpoint.hpp"
#include "manga/codec.hpp"
#include "manga/config.hpp"
#include "manga/dataset.hpp"
#include "manga/metrics.hpp"
#include "manga/synthetic.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace manga {

/// Codec and text embedder matching a config.
AvgPoolCodec make_codec(const PipelineConfig& cfg);
HashTextEmbedder make_embedder(const PipelineConfig& cfg);

/// Latents, caption embeddings and masks for one record. The record's token
/// grid must match the model's.
template <class Scalar>
TrainingSample<Scalar> prepare_sample(const TrainingRecord& r, const ImageCodec& codec, const TextEmbedder& embedder,
                                      const ModelConfig& cfg) {
    if (r.k_max() != cfg.k_max)
        throw ConfigError("record '" + r.page_id + "' has K_max=" + std::to_string(r.k_max()) + ", model expects " +
                          std::to_string(cfg.k_max));
    TrainingSample<Scalar> s;
    s.z0 = codec.encode(r.panel_images).template cast<Scalar>();
    if (s.z0.channels != cfg.latent_channels || s.z0.height != cfg.latent_height || s.z0.width != cfg.latent_width)
        throw ConfigError("record '" + r.page_id + "' encodes to a latent of the wrong size");
    s.captions = embedder.embed(r.captions).template cast<Scalar>();
    const int n = cfg.tokens_per_panel();
    s.masks = MaskSet::none(cfg.k_max, n);
    for (int k = 0; k < cfg.k_max; ++k) {
        const MaskGrid& g = r.intra_mask[std::size_t(k)];
        if (g.rows() != cfg.grid_height() || g.cols() != cfg.grid_width())
            throw ConfigError("record '" + r.page_id + "': bubble mask grid differs from the model token grid");
        for (int s_ = 0; s_ < n; ++s_) s.masks.intra(k, s_) = g(s_ / cfg.grid_width(), s_ % cfg.grid_width());
        s.masks.inter[k] = r.inter_mask[std::size_t(k)];
    }
    return s;
}

struct PageBuild {
    TrainingRecord record;
    ManifestEntry manifest;
    EnrichedPageXML enriched;
};

/// Order, enrich, caption and package one annotated page.
PageBuild build_page(const Image& page, const PageAnnotation& annotation, const std::vector<BBox>& bubbles,
                     CaptioningClient& client, const RecordOptions& options, int caption_attempts);

struct DatasetPaths {
    std::filesystem::path annotations;
    std::filesystem::path images;
    std::filesystem::path out;
    std::optional<std::filesystem::path> bubbles;  ///< <page_id>.json lists; text boxes otherwise
};

/// Every *.xml under paths.annotations (sorted by name) becomes one record.
/// Writes records.jsonl, panels/, enriched/ and manifest.jsonl under paths.out.
std::vector<PageBuild> build_dataset(const DatasetPaths& paths, CaptioningClient& client, const RecordOptions& options,
                                     int caption_attempts);

/// Trailing mean over `window` values ending at each index.
std::vector<double> smoothed(const std::vector<double>& values, std::size_t window = 50);

struct TrainProgress {
    std::int64_t step;
    double loss;
};

/// Runs cfg.train.steps - state.step optimizer steps. The batch for step s
/// is batch_indices(cfg.seed, s, ...), so resuming continues the same order.
std::vector<double> train_model(const PipelineConfig& cfg, TrainState<float>& state,
                                const std::vector<TrainingSample<float>>& samples,
                                const std::function<void(const TrainProgress&)>& on_step = {});

struct GeneratedPage {
    ScriptSet scripts;
    PanelImageStack panels;
    Image page;
};

GeneratedPage generate_page(const Checkpoint& ck, const std::string& story, int k, std::uint64_t seed,
                            StorySplitClient* splitter = nullptr);

/// Generates a page and writes it as PNG; returns what was written.
GeneratedPage run_generate(const std::filesystem::path& story_file, int k, const std::filesystem::path& ckpt,
                           const std::filesystem::path& out_png, std::uint64_t seed);

struct EvalReport {
    double fid = 0.0;
    double clip_i = 0.0;
    std::size_t n = 0;
    std::string extractor_id;

    std::string to_json() const;
};

/// PNGs of each directory, paired by sorted file name.
EvalReport run_eval(const std::filesystem::path& gen_dir, const std::filesystem::path& ref_dir,
                    const FeatureExtractor& extractor);

std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir, const std::string& extension);

}  // namespace manga
