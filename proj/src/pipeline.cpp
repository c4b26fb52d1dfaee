#include "manga/pipeline.hpp"

#include "manga/panel_order.hpp"
#include "manga/panelization.hpp"
#include "manga/script_splitter.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace manga {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("cannot open " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string relative_to(const fs::path& p, const fs::path& base) {
    return fs::relative(fs::absolute(p), fs::absolute(base)).generic_string();
}

}  // namespace

AvgPoolCodec make_codec(const PipelineConfig& cfg) {
    return AvgPoolCodec(cfg.page_height / cfg.model.latent_height, cfg.model.latent_channels);
}

HashTextEmbedder make_embedder(const PipelineConfig& cfg) {
    return HashTextEmbedder(cfg.model.d_text, cfg.model.max_text_tokens);
}

std::vector<fs::path> list_files(const fs::path& dir, const std::string& extension) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == extension) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

PageBuild build_page(const Image& page, const PageAnnotation& annotation, const std::vector<BBox>& bubbles,
                     CaptioningClient& client, const RecordOptions& options, int caption_attempts) {
    PageBuild out;
    const OrderResult order = order_panels(annotation.panel_boxes(), annotation.width, annotation.height);
    out.enriched = build_enriched_xml(annotation, order.permutation);
    const CaptionResult captions = request_captions(client, page, out.enriched, caption_attempts);
    out.record = build_record(page, annotation, order, captions, bubbles, options);

    out.manifest.page_id = annotation.page_id;
    out.manifest.captions = captions.panel_captions;
    out.manifest.story = captions.story;
    out.manifest.bubble_boxes = bubbles;
    out.manifest.order = order.permutation;
    return out;
}

std::vector<PageBuild> build_dataset(const DatasetPaths& paths, CaptioningClient& client, const RecordOptions& options,
                                     int caption_attempts) {
    const auto xml_files = list_files(paths.annotations, ".xml");
    if (xml_files.empty()) throw DataError("no .xml annotations in " + paths.annotations.string());
    fs::create_directories(paths.out / "enriched");

    std::vector<PageBuild> pages;
    std::vector<TrainingRecord> records;
    std::vector<ManifestEntry> manifest;
    for (const auto& xml_file : xml_files) {
        const PageAnnotation a = parse_page_annotation(read_text(xml_file));
        fs::path image_file = paths.images / (a.page_id + ".png");
        if (!fs::exists(image_file)) image_file = paths.images / (xml_file.stem().string() + ".png");
        if (!fs::exists(image_file)) throw DataError("no image for page '" + a.page_id + "' in " + paths.images.string());
        const Image image = read_png(image_file);

        std::vector<BBox> bubbles;
        if (paths.bubbles) {
            const fs::path bf = *paths.bubbles / (a.page_id + ".json");
            if (fs::exists(bf)) {
                try {
                    for (const auto& b : json::parse(read_text(bf)))
                        bubbles.push_back({b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()});
                } catch (const json::exception& e) {
                    throw DataError(bf.string() + ": " + e.what());
                }
            }
        } else {
            for (const auto& t : a.texts) bubbles.push_back(t.box);
        }

        PageBuild pb = build_page(image, a, bubbles, client, options, caption_attempts);
        pb.manifest.image_path = relative_to(image_file, paths.out);
        pb.manifest.xml_path = relative_to(xml_file, paths.out);
        std::ofstream(paths.out / "enriched" / (a.page_id + ".xml")) << pb.enriched.to_xml();
        records.push_back(pb.record);
        manifest.push_back(pb.manifest);
        pages.push_back(std::move(pb));
    }
    write_records(paths.out, records);
    write_manifest(paths.out / "manifest.jsonl", manifest);
    return pages;
}

std::vector<double> smoothed(const std::vector<double>& values, std::size_t window) {
    std::vector<double> out;
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        acc += values[i];
        if (i >= window) acc -= values[i - window];
        out.push_back(acc / double(std::min(i + 1, window)));
    }
    return out;
}

std::vector<double> train_model(const PipelineConfig& cfg, TrainState<float>& state,
                                const std::vector<TrainingSample<float>>& samples,
                                const std::function<void(const TrainProgress&)>& on_step) {
    if (samples.empty()) throw DataError("training set is empty");
    const NoiseSchedule sched = cfg.schedule.make();
    std::vector<double> losses;
    std::vector<const TrainingSample<float>*> batch;
    while (state.step < cfg.train.steps) {
        batch.clear();
        for (auto i : batch_indices(cfg.seed, state.step, std::size_t(cfg.train.batch_size), samples.size()))
            batch.push_back(&samples[i]);
        AdamWConfig opt = cfg.optimizer;
        opt.lr = learning_rate(cfg.optimizer, state.step, cfg.train.steps);
        const double loss = train_step(state, batch, sched, opt);
        losses.push_back(loss);
        if (on_step) on_step({state.step, loss});
    }
    return losses;
}

GeneratedPage generate_page(const Checkpoint& ck, const std::string& story, int k, std::uint64_t seed,
                            StorySplitClient* splitter) {
    const PipelineConfig& cfg = ck.config;
    GeneratedPage g;
    const ScriptSet split = in_stage("split-story", [&] { return split_story(story, k, cfg.k_max, splitter); });
    g.scripts = in_stage("pad-scripts", [&] { return pad_scripts(split.scripts, cfg.k_max); });
    g.scripts.k = split.k;
    g.scripts.warnings = split.warnings;
    const MaskSet masks = inference_masks(g.scripts, cfg.model.tokens_per_panel());
    const auto codec = make_codec(cfg);
    const auto embedder = make_embedder(cfg);
    g.panels = in_stage("sample", [&] {
        return sample(ck.state->model, g.scripts, masks, cfg.schedule.make(), seed, codec, embedder);
    });
    g.page = in_stage("compose", [&] { return compose_page(g.panels); });
    return g;
}

GeneratedPage run_generate(const fs::path& story_file, int k, const fs::path& ckpt, const fs::path& out_png,
                           std::uint64_t seed) {
    const Checkpoint ck = in_stage("load-checkpoint", [&] { return load_checkpoint(ckpt); });
    if (k < 1 || k > ck.config.k_max)
        throw ConfigError("k exceeds K_max: k=" + std::to_string(k) + ", K_max=" + std::to_string(ck.config.k_max));
    const std::string story = in_stage("read-story", [&] { return read_text(story_file); });
    GeneratedPage g = generate_page(ck, story, k, seed);
    in_stage("write-page", [&] { write_png(g.page, out_png); });
    return g;
}

std::string EvalReport::to_json() const {
    json j = {{"fid", fid}, {"clip_i", clip_i}, {"n", n}, {"extractor_id", extractor_id}};
    return j.dump(2);
}

EvalReport run_eval(const fs::path& gen_dir, const fs::path& ref_dir, const FeatureExtractor& extractor) {
    const auto gen_files = list_files(gen_dir, ".png");
    const auto ref_files = list_files(ref_dir, ".png");
    if (gen_files.empty()) throw DataError("no .png images in " + gen_dir.string());
    if (ref_files.empty()) throw DataError("no .png images in " + ref_dir.string());
    if (gen_files.size() != ref_files.size())
        throw DataError("clip_i needs paired images: " + std::to_string(gen_files.size()) + " generated vs " +
                        std::to_string(ref_files.size()) + " reference");
    auto load = [](const std::vector<fs::path>& files) {
        std::vector<Image> out;
        for (const auto& f : files) out.push_back(read_png(f));
        return out;
    };
    const FeatureSet gen = extractor.extract_all(load(gen_files));
    const FeatureSet ref = extractor.extract_all(load(ref_files));
    EvalReport r;
    r.fid = frechet_distance(gen, ref);
    r.clip_i = clip_i(gen, ref);
    r.n = gen_files.size();
    r.extractor_id = extractor.id();
    return r;
}

}  // namespace manga
